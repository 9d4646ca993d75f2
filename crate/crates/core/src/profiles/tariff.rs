use std::path::Path;

use chrono::{Datelike, NaiveDate, Weekday};
use serde::{Deserialize, Serialize};

use super::TimeGrid;
use crate::error::{Error, Result};

/// A price period starting at `start_minute` (minutes since midnight) and
/// running until the next period starts. Periods wrap around midnight.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TariffPeriod {
    pub start_minute: u32,
    /// Consumption price, $/kWh.
    pub buy: f64,
    /// Feed-in price paid for exported energy, $/kWh.
    pub sell: f64,
}

/// JSON form of one tariff variant: `{season, weekend, periods: [...]}`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TariffPeriodsConfig {
    pub season: String,
    pub weekend: bool,
    pub periods: Vec<TariffPeriod>,
    /// Calendar months (1-12) the season covers. Derived from the season
    /// name when absent: `summer` is June to September, `winter` the rest,
    /// `all` every month.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub months: Option<Vec<u32>>,
}

impl TariffPeriodsConfig {
    fn covers_month(&self, month: u32) -> Result<bool> {
        if let Some(months) = &self.months {
            return Ok(months.contains(&month));
        }
        match self.season.to_ascii_lowercase().as_str() {
            "summer" => Ok((6..=9).contains(&month)),
            "winter" | "non-summer" => Ok(!(6..=9).contains(&month)),
            "all" | "any" | "year" => Ok(true),
            other => Err(Error::Config(format!("season `{other}` needs an explicit `months` list"))),
        }
    }

    fn validate(&self) -> Result<()> {
        if self.periods.is_empty() {
            return Err(Error::Config(format!("tariff `{}` declares no periods", self.season)));
        }
        for w in self.periods.windows(2) {
            if w[1].start_minute <= w[0].start_minute {
                return Err(Error::Config(format!(
                    "tariff `{}` periods must have increasing start minutes",
                    self.season
                )));
            }
        }
        for p in &self.periods {
            if p.start_minute >= 1440 {
                return Err(Error::Config(format!("period start {} is past midnight", p.start_minute)));
            }
            if !(p.buy >= 0.0 && p.sell >= 0.0 && p.buy.is_finite() && p.sell.is_finite()) {
                return Err(Error::Config(format!(
                    "rates must be finite and non-negative (buy {}, sell {})",
                    p.buy, p.sell
                )));
            }
        }
        Ok(())
    }

    /// Expands the periods onto `grid`.
    pub fn to_schedule(&self, grid: TimeGrid) -> Result<TariffSchedule> {
        self.validate()?;
        let mut buy = Vec::with_capacity(grid.steps());
        let mut sell = Vec::with_capacity(grid.steps());
        for t in 0..grid.steps() {
            let minute = grid.start_minute(t);
            // left-closed: the period that begins at or before this instant;
            // minutes before the first start belong to the last (wrapping) period
            let p = self
                .periods
                .iter()
                .rev()
                .find(|p| p.start_minute <= minute)
                .unwrap_or_else(|| self.periods.last().expect("validated non-empty"));
            buy.push(p.buy);
            sell.push(p.sell);
        }
        Ok(TariffSchedule {
            buy_rate: buy,
            sell_rate: sell,
            season: self.season.clone(),
            weekend: self.weekend,
            periods: self.periods.clone(),
        })
    }
}

/// Time-of-use prices expanded onto a time grid.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TariffSchedule {
    pub buy_rate: Vec<f64>,
    pub sell_rate: Vec<f64>,
    pub season: String,
    pub weekend: bool,
    pub periods: Vec<TariffPeriod>,
}

impl TariffSchedule {
    /// Same prices all day.
    pub fn flat(grid: TimeGrid, buy: f64, sell: f64) -> Result<Self> {
        TariffPeriodsConfig {
            season: "all".into(),
            weekend: false,
            periods: vec![TariffPeriod { start_minute: 0, buy, sell }],
            months: None,
        }
        .to_schedule(grid)
    }

    pub fn steps(&self) -> usize {
        self.buy_rate.len()
    }

    /// `(buy, sell)` in $/kWh at `step`.
    pub fn lookup(&self, step: usize) -> Result<(f64, f64)> {
        match (self.buy_rate.get(step), self.sell_rate.get(step)) {
            (Some(&b), Some(&s)) => Ok((b, s)),
            _ => Err(Error::Bounds { index: step, len: self.steps() }),
        }
    }

    pub fn max_buy(&self) -> f64 {
        self.buy_rate.iter().copied().fold(0.0, f64::max)
    }

    /// All rates multiplied by `factor`.
    pub fn scaled(&self, factor: f64) -> Self {
        let mut out = self.clone();
        out.buy_rate.iter_mut().chain(out.sell_rate.iter_mut()).for_each(|r| *r *= factor);
        for p in &mut out.periods {
            p.buy *= factor;
            p.sell *= factor;
        }
        out
    }
}

/// Every tariff variant of a rate sheet, selected per calendar day.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct TariffBook {
    pub variants: Vec<TariffPeriodsConfig>,
}

impl TariffBook {
    pub fn single(config: TariffPeriodsConfig) -> Self {
        Self { variants: vec![config] }
    }

    pub fn flat(buy: f64, sell: f64) -> Self {
        Self::single(TariffPeriodsConfig {
            season: "all".into(),
            weekend: false,
            periods: vec![TariffPeriod { start_minute: 0, buy, sell }],
            months: None,
        })
    }

    /// Reads either a list of variants or one variant object.
    pub fn load_json(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_json(&text)
    }

    pub fn from_json(text: &str) -> Result<Self> {
        #[derive(Deserialize)]
        #[serde(untagged)]
        enum OneOrMany {
            Many(Vec<TariffPeriodsConfig>),
            One(TariffPeriodsConfig),
        }
        let book = match serde_json::from_str(text)? {
            OneOrMany::Many(variants) => Self { variants },
            OneOrMany::One(v) => Self::single(v),
        };
        if book.variants.is_empty() {
            return Err(Error::Config("tariff file holds no variants".into()));
        }
        for v in &book.variants {
            v.validate()?;
        }
        Ok(book)
    }

    /// The variant matching the date's season and weekday/weekend type. A
    /// season without a dedicated weekend variant falls back to its weekday one.
    pub fn variant_for(&self, date: NaiveDate) -> Result<&TariffPeriodsConfig> {
        let weekend = matches!(date.weekday(), Weekday::Sat | Weekday::Sun);
        let mut in_season = Vec::new();
        for v in &self.variants {
            if v.covers_month(date.month())? {
                in_season.push(v);
            }
        }
        in_season
            .iter()
            .find(|v| v.weekend == weekend)
            .or_else(|| in_season.first())
            .copied()
            .ok_or_else(|| Error::Config(format!("no tariff variant covers {date}")))
    }

    pub fn schedule_for(&self, date: NaiveDate, grid: TimeGrid) -> Result<TariffSchedule> {
        self.variant_for(date)?.to_schedule(grid)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn three_period() -> TariffPeriodsConfig {
        TariffPeriodsConfig {
            season: "summer".into(),
            weekend: false,
            periods: vec![
                TariffPeriod { start_minute: 0, buy: 0.05, sell: 0.04 },
                TariffPeriod { start_minute: 7 * 60, buy: 0.10, sell: 0.04 },
                TariffPeriod { start_minute: 14 * 60, buy: 0.30, sell: 0.04 },
                TariffPeriod { start_minute: 20 * 60, buy: 0.10, sell: 0.04 },
            ],
            months: None,
        }
    }

    #[test]
    fn flat_lookup() {
        let s = TariffSchedule::flat(TimeGrid::QUARTER_HOUR, 0.10, 0.05).unwrap();
        for t in [0, 17, 95] {
            assert_eq!(s.lookup(t).unwrap(), (0.10, 0.05));
        }
    }

    #[test]
    fn on_peak_membership() {
        let s = three_period().to_schedule(TimeGrid::QUARTER_HOUR).unwrap();
        assert_eq!(s.lookup(15 * 4).unwrap().0, 0.30);
    }

    #[test]
    fn boundaries_are_left_closed() {
        let s = three_period().to_schedule(TimeGrid::QUARTER_HOUR).unwrap();
        assert_eq!(s.lookup(14 * 4).unwrap().0, 0.30);
        assert_eq!(s.lookup(14 * 4 - 1).unwrap().0, 0.10);
        assert_eq!(s.lookup(20 * 4).unwrap().0, 0.10);
    }

    #[test]
    fn out_of_range_step() {
        let s = three_period().to_schedule(TimeGrid::QUARTER_HOUR).unwrap();
        assert!(matches!(s.lookup(96), Err(Error::Bounds { index: 96, len: 96 })));
    }

    #[test]
    fn periods_wrap_past_midnight() {
        let cfg = TariffPeriodsConfig {
            season: "all".into(),
            weekend: false,
            periods: vec![
                TariffPeriod { start_minute: 6 * 60, buy: 0.2, sell: 0.0 },
                TariffPeriod { start_minute: 22 * 60, buy: 0.1, sell: 0.0 },
            ],
            months: None,
        };
        let s = cfg.to_schedule(TimeGrid::HOURLY).unwrap();
        assert_eq!(s.lookup(3).unwrap().0, 0.1);
        assert_eq!(s.lookup(6).unwrap().0, 0.2);
    }

    #[test]
    fn reconstructs_declared_periods() {
        let s = three_period().to_schedule(TimeGrid::QUARTER_HOUR).unwrap();
        let changes = s.buy_rate.windows(2).filter(|w| w[0] != w[1]).count();
        assert_eq!(changes + 1, s.periods.len());
    }

    #[test]
    fn rejects_negative_rate() {
        let mut cfg = three_period();
        cfg.periods[1].buy = -0.1;
        assert!(cfg.to_schedule(TimeGrid::HOURLY).is_err());
    }

    #[test]
    fn book_selects_season_and_weekend() {
        let mut weekend = three_period();
        weekend.weekend = true;
        weekend.periods = vec![TariffPeriod { start_minute: 0, buy: 0.07, sell: 0.04 }];
        let winter = TariffPeriodsConfig {
            season: "winter".into(),
            weekend: false,
            periods: vec![TariffPeriod { start_minute: 0, buy: 0.09, sell: 0.04 }],
            months: None,
        };
        let book = TariffBook { variants: vec![three_period(), weekend, winter] };
        let grid = TimeGrid::HOURLY;
        // Friday, Saturday in July; a Saturday in January
        let fri = NaiveDate::from_ymd_opt(2016, 7, 1).unwrap();
        let sat = NaiveDate::from_ymd_opt(2016, 7, 2).unwrap();
        let jan = NaiveDate::from_ymd_opt(2016, 1, 2).unwrap();
        assert_eq!(book.schedule_for(fri, grid).unwrap().lookup(15).unwrap().0, 0.30);
        assert_eq!(book.schedule_for(sat, grid).unwrap().lookup(15).unwrap().0, 0.07);
        assert_eq!(book.schedule_for(jan, grid).unwrap().lookup(15).unwrap().0, 0.09);
    }

    #[test]
    fn json_single_or_list() {
        let one = r#"{"season":"all","weekend":false,"periods":[{"start_minute":0,"buy":0.1,"sell":0.05}]}"#;
        assert_eq!(TariffBook::from_json(one).unwrap().variants.len(), 1);
        let many = format!("[{one},{one}]");
        assert_eq!(TariffBook::from_json(&many).unwrap().variants.len(), 2);
        assert!(TariffBook::from_json("[]").is_err());
    }
}
