use flexload::{Network, OutputMode};

#[test]
fn checkpoint_round_trips_through_a_file() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("policy.bin");
    let net = Network::standard(12, 3, OutputMode::SigmoidPerUnit, 4).unwrap();
    net.save(&path).unwrap();
    let back = Network::load(&path).unwrap();
    assert_eq!(back.sizes(), net.sizes());
    assert_eq!(back.output_mode(), net.output_mode());
    assert_eq!(back.flat_params(), net.flat_params());
    let x = [0.25; 12];
    assert_eq!(back.predict(&x).unwrap(), net.predict(&x).unwrap());
}

#[test]
fn truncated_checkpoint_is_an_error() {
    let net = Network::standard(11, 8, OutputMode::Linear, 1).unwrap();
    let mut bytes = Vec::new();
    net.write_checkpoint(&mut bytes).unwrap();
    bytes.truncate(bytes.len() / 2);
    assert!(Network::read_checkpoint(bytes.as_slice()).is_err());
    assert!(Network::read_checkpoint(&b"not a checkpoint"[..]).is_err());
}

#[test]
fn missing_checkpoint_is_an_error() {
    let dir = tempfile::tempdir().unwrap();
    assert!(Network::load(dir.path().join("absent.bin")).is_err());
}
