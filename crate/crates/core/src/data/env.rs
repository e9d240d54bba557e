use std::fmt;

use chrono::NaiveDate;
use serde::{Deserialize, Serialize};

use super::types::{Action, Bar, DateRange};
use super::{Dataset, EnvError};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct EnvConfig {
    pub initial_cash: f64,
    /// Proportional fee charged on the traded notional, e.g. 0.001 for 0.1%.
    pub fee_rate: f64,
}

impl Default for EnvConfig {
    fn default() -> Self {
        Self {
            initial_cash: 100_000.0,
            fee_rate: 0.001,
        }
    }
}

impl EnvConfig {
    pub const MAX_FEE_RATE: f64 = 0.1;

    pub fn validate(&self) -> Result<(), EnvError> {
        if !(self.initial_cash.is_finite() && self.initial_cash > 0.0) {
            return Err(EnvError::Config(format!(
                "initial cash must be positive, got {}",
                self.initial_cash
            )));
        }
        if !(0.0..=Self::MAX_FEE_RATE).contains(&self.fee_rate) {
            return Err(EnvError::Config(format!(
                "fee rate must be in [0, {}], got {}",
                Self::MAX_FEE_RATE,
                self.fee_rate
            )));
        }
        Ok(())
    }
}

/// Portfolio state at the start of trading day `t`, marked at that day's
/// adjusted close.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EnvState {
    pub t: usize,
    pub date: NaiveDate,
    pub cash: f64,
    pub position: f64,
    pub price: f64,
}

impl EnvState {
    pub fn portfolio_value(&self) -> f64 {
        self.cash + self.position * self.price
    }
}

/// HOLD is always allowed; BUY needs at least one share's worth of cash;
/// SELL needs a position.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct ActionSet {
    pub buy: bool,
    pub sell: bool,
}

impl ActionSet {
    pub fn contains(&self, action: Action) -> bool {
        match action {
            Action::Buy => self.buy,
            Action::Sell => self.sell,
            Action::Hold => true,
        }
    }

    pub fn actions(&self) -> Vec<Action> {
        Action::ALL
            .into_iter()
            .filter(|&a| self.contains(a))
            .collect()
    }
}

impl fmt::Display for ActionSet {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let names: Vec<&str> = self.actions().iter().map(|a| a.as_str()).collect();
        f.write_str(&names.join(", "))
    }
}

pub fn valid_actions(cash: f64, position: f64, price: f64) -> ActionSet {
    ActionSet {
        buy: cash >= price,
        sell: position > 0.0,
    }
}

/// Outcome of applying one order at a given price.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Execution {
    pub cash: f64,
    pub position: f64,
    pub executed: Action,
    pub coerced: bool,
    pub fee_paid: f64,
}

/// All-in / all-out execution with fractional shares. Orders that are not in
/// [`valid_actions`] become HOLD and are flagged as coerced.
pub fn execute(cash: f64, position: f64, price: f64, fee_rate: f64, action: Action) -> Execution {
    let allowed = valid_actions(cash, position, price);
    if !allowed.contains(action) {
        return Execution {
            cash,
            position,
            executed: Action::Hold,
            coerced: true,
            fee_paid: 0.0,
        };
    }
    match action {
        Action::Buy => Execution {
            cash: 0.0,
            position: position + cash * (1.0 - fee_rate) / price,
            executed: Action::Buy,
            coerced: false,
            fee_paid: cash * fee_rate,
        },
        Action::Sell => {
            let notional = position * price;
            Execution {
                cash: cash + notional * (1.0 - fee_rate),
                position: 0.0,
                executed: Action::Sell,
                coerced: false,
                fee_paid: notional * fee_rate,
            }
        }
        Action::Hold => Execution {
            cash,
            position,
            executed: Action::Hold,
            coerced: false,
            fee_paid: 0.0,
        },
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct StepResult {
    /// Trading day on which the order executed.
    pub date: NaiveDate,
    pub price: f64,
    pub requested: Action,
    pub executed: Action,
    pub coerced: bool,
    pub fee_paid: f64,
    /// Cash, position and value right after the trade, marked at `price`.
    pub cash: f64,
    pub position: f64,
    pub post_trade_value: f64,
    pub next_state: EnvState,
    /// Change in marked portfolio value from the previous state to `next_state`.
    pub reward: f64,
    pub done: bool,
}

/// Daily single-asset environment. Orders fill at the same day's adjusted
/// close; an episode over N trading days ends after N steps.
#[derive(Debug, Clone)]
pub struct TradingEnv {
    bars: Vec<Bar>,
    config: EnvConfig,
    state: EnvState,
    done: bool,
}

impl TradingEnv {
    pub fn new(config: EnvConfig, bars: &[Bar]) -> Result<Self, EnvError> {
        config.validate()?;
        let first = bars.first().ok_or_else(|| {
            let d = NaiveDate::MIN;
            EnvError::EmptyRange(DateRange { start: d, end: d })
        })?;
        Ok(Self {
            state: Self::initial(&config, first),
            bars: bars.to_vec(),
            config,
            done: false,
        })
    }

    pub fn for_range(
        config: EnvConfig,
        dataset: &Dataset,
        range: DateRange,
    ) -> Result<Self, EnvError> {
        let bars = dataset.bars_in(&range);
        if bars.is_empty() {
            return Err(EnvError::EmptyRange(range));
        }
        Self::new(config, bars)
    }

    fn initial(config: &EnvConfig, first: &Bar) -> EnvState {
        EnvState {
            t: 0,
            date: first.date,
            cash: config.initial_cash,
            position: 0.0,
            price: first.adj_close,
        }
    }

    pub fn reset(&mut self) -> EnvState {
        self.state = Self::initial(&self.config, &self.bars[0]);
        self.done = false;
        self.state
    }

    pub fn state(&self) -> EnvState {
        self.state
    }

    pub fn is_done(&self) -> bool {
        self.done
    }

    pub fn bars(&self) -> &[Bar] {
        &self.bars
    }

    pub fn config(&self) -> &EnvConfig {
        &self.config
    }

    pub fn len(&self) -> usize {
        self.bars.len()
    }

    pub fn is_empty(&self) -> bool {
        self.bars.is_empty()
    }

    pub fn valid_actions(&self) -> ActionSet {
        valid_actions(self.state.cash, self.state.position, self.state.price)
    }

    pub fn step(&mut self, action: Action) -> Result<StepResult, EnvError> {
        if self.done {
            return Err(EnvError::Done);
        }
        let prev = self.state;
        let bar = self.bars[prev.t];
        let price = bar.adj_close;
        let ex = execute(
            prev.cash,
            prev.position,
            price,
            self.config.fee_rate,
            action,
        );
        let post_trade_value = ex.cash + ex.position * price;
        let next_t = prev.t + 1;
        let done = next_t >= self.bars.len();
        let (date, mark) = match self.bars.get(next_t) {
            Some(b) => (b.date, b.adj_close),
            None => (bar.date, price),
        };
        self.state = EnvState {
            t: next_t,
            date,
            cash: ex.cash,
            position: ex.position,
            price: mark,
        };
        self.done = done;
        Ok(StepResult {
            date: bar.date,
            price,
            requested: action,
            executed: ex.executed,
            coerced: ex.coerced,
            fee_paid: ex.fee_paid,
            cash: ex.cash,
            position: ex.position,
            post_trade_value,
            next_state: self.state,
            reward: self.state.portfolio_value() - prev.portfolio_value(),
            done,
        })
    }
}
