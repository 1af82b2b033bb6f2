//! Price sheets and every conversion from token counts to money.
//!
//! Prices are stored per token as exact decimals. Costs are exact products
//! and sums; rounding (half-even, six decimals of the major unit) happens only
//! when a single usage is priced with [`cost_of_usage`] or when an amount is
//! presented. Repricing the same ledger twice is therefore bit-identical, and
//! scaling a sheet by `k` scales every total by exactly `k`.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;
use std::iter::Sum;
use std::ops::{Add, AddAssign};
use std::path::Path;
use std::str::FromStr;

use chrono::NaiveDate;
use rust_decimal::{Decimal, RoundingStrategy};
use serde::de::{self, MapAccess, Visitor};
use serde::{Deserialize, Deserializer, Serialize};
use thiserror::Error;

use crate::ledger::EvalLedger;

/// Decimal places of the major unit kept when an amount is presented.
pub const MONEY_DECIMALS: u32 = 6;

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum PricingError {
    #[error("no price for model(s): {}", .0.join(", "))]
    UnknownModel(Vec<String>),
    #[error("currency mismatch: {0} vs {1}")]
    CurrencyMismatch(Currency, Currency),
    #[error("invalid currency code {0:?}")]
    InvalidCurrency(String),
    #[error("negative price for model {0}")]
    NegativePrice(String),
    #[error("model {0} listed more than once")]
    DuplicateModel(String),
    #[error("price sheet: {0}")]
    Format(String),
    #[error("arithmetic overflow")]
    Overflow,
}

/// Input and output token counts of one or more model calls.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct TokenUsage {
    pub input_tokens: u64,
    pub output_tokens: u64,
}

impl TokenUsage {
    pub const ZERO: TokenUsage = TokenUsage {
        input_tokens: 0,
        output_tokens: 0,
    };

    pub fn new(input_tokens: u64, output_tokens: u64) -> Self {
        Self {
            input_tokens,
            output_tokens,
        }
    }

    pub fn total(&self) -> u64 {
        self.input_tokens + self.output_tokens
    }
}

impl Add for TokenUsage {
    type Output = TokenUsage;

    fn add(self, rhs: Self) -> Self {
        TokenUsage {
            input_tokens: self.input_tokens + rhs.input_tokens,
            output_tokens: self.output_tokens + rhs.output_tokens,
        }
    }
}

impl AddAssign for TokenUsage {
    fn add_assign(&mut self, rhs: Self) {
        *self = *self + rhs;
    }
}

impl Sum for TokenUsage {
    fn sum<I: Iterator<Item = TokenUsage>>(iter: I) -> Self {
        iter.fold(TokenUsage::ZERO, Add::add)
    }
}

/// ISO 4217 style three-letter currency code.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize)]
#[serde(transparent)]
pub struct Currency(String);

impl Currency {
    pub fn usd() -> Self {
        Currency("USD".to_owned())
    }

    pub fn as_str(&self) -> &str {
        &self.0
    }
}

impl FromStr for Currency {
    type Err = PricingError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        if s.len() == 3 && s.bytes().all(|b| b.is_ascii_uppercase()) {
            Ok(Currency(s.to_owned()))
        } else {
            Err(PricingError::InvalidCurrency(s.to_owned()))
        }
    }
}

impl<'de> Deserialize<'de> for Currency {
    fn deserialize<D: Deserializer<'de>>(deserializer: D) -> Result<Self, D::Error> {
        let raw = String::deserialize(deserializer)?;
        raw.parse().map_err(de::Error::custom)
    }
}

impl fmt::Display for Currency {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

/// An exact amount of a single currency.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct Money {
    amount: Decimal,
    currency: Currency,
}

impl Money {
    pub fn new(amount: Decimal, currency: Currency) -> Self {
        Money { amount, currency }
    }

    pub fn zero(currency: Currency) -> Self {
        Money::new(Decimal::ZERO, currency)
    }

    pub fn usd(amount: Decimal) -> Self {
        Money::new(amount, Currency::usd())
    }

    /// Parses a decimal string in the given currency.
    pub fn parse(amount: &str, currency: Currency) -> Result<Self, PricingError> {
        let amount = Decimal::from_str(amount.trim())
            .map_err(|e| PricingError::Format(format!("invalid amount {amount:?}: {e}")))?;
        Ok(Money::new(amount, currency))
    }

    pub fn amount(&self) -> Decimal {
        self.amount
    }

    pub fn currency(&self) -> &Currency {
        &self.currency
    }

    pub fn is_zero(&self) -> bool {
        self.amount.is_zero()
    }

    fn same_currency(&self, other: &Money) -> Result<(), PricingError> {
        if self.currency == other.currency {
            Ok(())
        } else {
            Err(PricingError::CurrencyMismatch(
                self.currency.clone(),
                other.currency.clone(),
            ))
        }
    }

    pub fn checked_add(&self, other: &Money) -> Result<Money, PricingError> {
        self.same_currency(other)?;
        let amount = self
            .amount
            .checked_add(other.amount)
            .ok_or(PricingError::Overflow)?;
        Ok(Money::new(amount, self.currency.clone()))
    }

    pub fn checked_sub(&self, other: &Money) -> Result<Money, PricingError> {
        self.same_currency(other)?;
        let amount = self
            .amount
            .checked_sub(other.amount)
            .ok_or(PricingError::Overflow)?;
        Ok(Money::new(amount, self.currency.clone()))
    }

    /// Multiplies by an exact scalar.
    pub fn scale(&self, factor: Decimal) -> Result<Money, PricingError> {
        let amount = self
            .amount
            .checked_mul(factor)
            .ok_or(PricingError::Overflow)?;
        Ok(Money::new(amount, self.currency.clone()))
    }

    /// Divides by a count; exact whenever the quotient fits 28 significant digits.
    pub fn div_count(&self, n: u64) -> Result<Money, PricingError> {
        let amount = self
            .amount
            .checked_div(Decimal::from(n))
            .ok_or(PricingError::Overflow)?;
        Ok(Money::new(amount, self.currency.clone()))
    }

    /// Compares amounts, failing on mismatched currencies.
    pub fn try_cmp(&self, other: &Money) -> Result<std::cmp::Ordering, PricingError> {
        self.same_currency(other)?;
        Ok(self.amount.cmp(&other.amount))
    }

    /// Half-even rounding to [`MONEY_DECIMALS`] places, always carrying exactly that scale.
    pub fn rounded(&self) -> Money {
        Money::new(round_amount(self.amount), self.currency.clone())
    }

    /// The presentation string: six decimals, no currency suffix.
    pub fn to_fixed(&self) -> String {
        round_amount(self.amount).to_string()
    }

    pub fn to_f64(&self) -> f64 {
        use rust_decimal::prelude::ToPrimitive;
        self.amount.to_f64().unwrap_or(f64::NAN)
    }

    /// Sums amounts that must share `currency`.
    pub fn sum<'a, I>(currency: &Currency, items: I) -> Result<Money, PricingError>
    where
        I: IntoIterator<Item = &'a Money>,
    {
        let mut total = Money::zero(currency.clone());
        for m in items {
            total = total.checked_add(m)?;
        }
        Ok(total)
    }
}

pub(crate) fn round_amount(amount: Decimal) -> Decimal {
    let mut r =
        amount.round_dp_with_strategy(MONEY_DECIMALS, RoundingStrategy::MidpointNearestEven);
    r.rescale(MONEY_DECIMALS);
    r
}

impl fmt::Display for Money {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{} {}", self.to_fixed(), self.currency)
    }
}

/// Per-token prices of one model.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelPrice {
    #[serde(with = "crate::decimal_str")]
    pub input_per_token: Decimal,
    #[serde(with = "crate::decimal_str")]
    pub output_per_token: Decimal,
}

impl ModelPrice {
    pub fn per_token(input: Decimal, output: Decimal) -> Self {
        ModelPrice {
            input_per_token: input,
            output_per_token: output,
        }
    }

    /// Builds a price from the per-million-token figures providers publish.
    pub fn per_million(input: Decimal, output: Decimal) -> Self {
        let million = Decimal::from(1_000_000u32);
        ModelPrice {
            input_per_token: input / million,
            output_per_token: output / million,
        }
    }

    fn exact_cost(&self, usage: TokenUsage) -> Result<Decimal, PricingError> {
        let input = Decimal::from(usage.input_tokens)
            .checked_mul(self.input_per_token)
            .ok_or(PricingError::Overflow)?;
        let output = Decimal::from(usage.output_tokens)
            .checked_mul(self.output_per_token)
            .ok_or(PricingError::Overflow)?;
        input.checked_add(output).ok_or(PricingError::Overflow)
    }
}

/// A dated table of per-token prices; the only source of dollar figures.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(try_from = "RawPriceSheet")]
pub struct PriceSheet {
    currency: Currency,
    as_of: NaiveDate,
    models: BTreeMap<String, ModelPrice>,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct RawPriceSheet {
    currency: Currency,
    as_of: NaiveDate,
    models: UniqueModels,
}

struct UniqueModels(BTreeMap<String, ModelPrice>);

impl<'de> Deserialize<'de> for UniqueModels {
    fn deserialize<D: Deserializer<'de>>(deserializer: D) -> Result<Self, D::Error> {
        struct ModelsVisitor;

        impl<'de> Visitor<'de> for ModelsVisitor {
            type Value = UniqueModels;

            fn expecting(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
                f.write_str("a map of model id to prices")
            }

            fn visit_map<A: MapAccess<'de>>(self, mut map: A) -> Result<Self::Value, A::Error> {
                let mut models = BTreeMap::new();
                while let Some((id, price)) = map.next_entry::<String, ModelPrice>()? {
                    if models.insert(id.clone(), price).is_some() {
                        return Err(de::Error::custom(PricingError::DuplicateModel(id)));
                    }
                }
                Ok(UniqueModels(models))
            }
        }

        deserializer.deserialize_map(ModelsVisitor)
    }
}

impl TryFrom<RawPriceSheet> for PriceSheet {
    type Error = PricingError;

    fn try_from(raw: RawPriceSheet) -> Result<Self, Self::Error> {
        PriceSheet::new(raw.currency, raw.as_of, raw.models.0)
    }
}

impl PriceSheet {
    pub fn new(
        currency: Currency,
        as_of: NaiveDate,
        models: BTreeMap<String, ModelPrice>,
    ) -> Result<Self, PricingError> {
        for (id, p) in &models {
            if p.input_per_token < Decimal::ZERO || p.output_per_token < Decimal::ZERO {
                return Err(PricingError::NegativePrice(id.clone()));
            }
        }
        Ok(PriceSheet {
            currency,
            as_of,
            models,
        })
    }

    pub fn currency(&self) -> &Currency {
        &self.currency
    }

    pub fn as_of(&self) -> NaiveDate {
        self.as_of
    }

    pub fn models(&self) -> &BTreeMap<String, ModelPrice> {
        &self.models
    }

    pub fn price(&self, model: &str) -> Option<&ModelPrice> {
        self.models.get(model)
    }

    /// Returns a copy with `model` priced at `price`, replacing any previous entry.
    pub fn with_price(
        mut self,
        model: impl Into<String>,
        price: ModelPrice,
    ) -> Result<Self, PricingError> {
        let model = model.into();
        let checked = PriceSheet::new(
            self.currency.clone(),
            self.as_of,
            BTreeMap::from([(model.clone(), price)]),
        )?;
        self.models.extend(checked.models);
        Ok(self)
    }

    /// Every price multiplied by a non-negative factor.
    pub fn scaled(&self, factor: Decimal) -> Result<PriceSheet, PricingError> {
        let mut models = BTreeMap::new();
        for (id, p) in &self.models {
            let input = p
                .input_per_token
                .checked_mul(factor)
                .ok_or(PricingError::Overflow)?;
            let output = p
                .output_per_token
                .checked_mul(factor)
                .ok_or(PricingError::Overflow)?;
            models.insert(id.clone(), ModelPrice::per_token(input, output));
        }
        PriceSheet::new(self.currency.clone(), self.as_of, models)
    }

    /// The unrounded cost of `usage` on `model`.
    pub fn exact_cost(&self, usage: TokenUsage, model: &str) -> Result<Money, PricingError> {
        let price = self
            .models
            .get(model)
            .ok_or_else(|| PricingError::UnknownModel(vec![model.to_owned()]))?;
        Ok(Money::new(price.exact_cost(usage)?, self.currency.clone()))
    }

    /// Unrounded cost of a per-model usage table.
    pub fn exact_cost_of_table<'a, I>(&self, usage: I) -> Result<Money, PricingError>
    where
        I: IntoIterator<Item = (&'a String, &'a TokenUsage)>,
    {
        let mut total = Money::zero(self.currency.clone());
        let mut missing = BTreeSet::new();
        for (model, u) in usage {
            match self.exact_cost(*u, model) {
                Ok(c) => total = total.checked_add(&c)?,
                Err(PricingError::UnknownModel(_)) => {
                    missing.insert(model.clone());
                }
                Err(e) => return Err(e),
            }
        }
        if !missing.is_empty() {
            return Err(PricingError::UnknownModel(missing.into_iter().collect()));
        }
        Ok(total)
    }

    /// Models in `ids` that have no price entry, sorted and de-duplicated.
    pub fn missing_models<'a, I: IntoIterator<Item = &'a str>>(&self, ids: I) -> Vec<String> {
        ids.into_iter()
            .filter(|m| !self.models.contains_key(*m))
            .map(str::to_owned)
            .collect::<BTreeSet<_>>()
            .into_iter()
            .collect()
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("price sheet serializes")
    }

    pub fn from_json(text: &str) -> Result<Self, PricingError> {
        serde_json::from_str(text).map_err(|e| PricingError::Format(e.to_string()))
    }

    pub fn load(path: &Path) -> Result<Self, PricingError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| PricingError::Format(format!("{}: {e}", path.display())))?;
        Self::from_json(&text)
    }

    /// The April 2024 GPT-3.5 / GPT-4 turbo prices used in the HumanEval experiments.
    pub fn openai_april_2024() -> PriceSheet {
        let models = BTreeMap::from([
            (
                "gpt-3.5-turbo-0125".to_owned(),
                ModelPrice::per_million(Decimal::new(5, 1), Decimal::new(15, 1)),
            ),
            (
                "gpt-4-turbo-2024-04-09".to_owned(),
                ModelPrice::per_million(Decimal::from(10), Decimal::from(30)),
            ),
        ]);
        PriceSheet::new(
            Currency::usd(),
            NaiveDate::from_ymd_opt(2024, 4, 1).expect("valid date"),
            models,
        )
        .expect("non-negative prices")
    }
}

/// Prices one usage: `input × input_price + output × output_price`, rounded half-even to six decimals.
pub fn cost_of_usage(
    usage: TokenUsage,
    model: &str,
    sheet: &PriceSheet,
) -> Result<Money, PricingError> {
    Ok(sheet.exact_cost(usage, model)?.rounded())
}

/// Totals every call of every strategy in `ledger` under `sheet`.
///
/// Totals are exact sums of per-call costs; no provider is contacted and the
/// ledger is not touched. Fails listing every model that has no price.
pub fn reprice(
    ledger: &EvalLedger,
    sheet: &PriceSheet,
) -> Result<BTreeMap<String, Money>, PricingError> {
    let missing = sheet.missing_models(ledger.model_ids().iter().map(String::as_str));
    if !missing.is_empty() {
        return Err(PricingError::UnknownModel(missing));
    }
    let mut totals: BTreeMap<String, Money> = BTreeMap::new();
    for run in ledger.runs() {
        let entry = totals
            .entry(run.strategy_id.clone())
            .or_insert_with(|| Money::zero(sheet.currency().clone()));
        for call in run.results.iter().flat_map(|t| t.calls.iter()) {
            *entry = entry.checked_add(&sheet.exact_cost(call.usage, &call.model)?)?;
        }
    }
    Ok(totals)
}

/// One-time optimization spend plus a per-task deployment cost.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct CostBreakdown {
    pub fixed: Money,
    pub variable_per_task: Money,
    pub tasks_assumed: u64,
}

impl CostBreakdown {
    pub fn new(
        fixed: Money,
        variable_per_task: Money,
        tasks_assumed: u64,
    ) -> Result<Self, PricingError> {
        fixed.same_currency(&variable_per_task)?;
        Ok(CostBreakdown {
            fixed,
            variable_per_task,
            tasks_assumed,
        })
    }

    /// `fixed + n × variable_per_task`, exactly.
    pub fn total(&self, n: u64) -> Result<Money, PricingError> {
        self.fixed
            .checked_add(&self.variable_per_task.scale(Decimal::from(n))?)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Breakeven {
    /// `a` is no more expensive than `b` from this task count on.
    AfterTasks(u64),
    /// `a` never catches up: its variable cost is not lower and its fixed cost is higher.
    Never,
}

/// Smallest `n ≥ 0` with `a.fixed + n·a.variable ≤ b.fixed + n·b.variable`.
pub fn breakeven_tasks(a: &CostBreakdown, b: &CostBreakdown) -> Result<Breakeven, PricingError> {
    a.fixed.same_currency(&b.fixed)?;
    a.variable_per_task.same_currency(&b.variable_per_task)?;
    a.fixed.same_currency(&a.variable_per_task)?;

    let fixed_gap = a.fixed.amount - b.fixed.amount;
    if fixed_gap <= Decimal::ZERO {
        return Ok(Breakeven::AfterTasks(0));
    }
    let slope_gap = b.variable_per_task.amount - a.variable_per_task.amount;
    if slope_gap <= Decimal::ZERO {
        return Ok(Breakeven::Never);
    }

    let holds = |n: Decimal| fixed_gap <= n * slope_gap;
    let quotient = fixed_gap
        .checked_div(slope_gap)
        .ok_or(PricingError::Overflow)?;
    let mut n = quotient.ceil();
    // The quotient is rounded at 28 digits; settle on the exact boundary.
    while n > Decimal::ZERO && holds(n - Decimal::ONE) {
        n -= Decimal::ONE;
    }
    while !holds(n) {
        n += Decimal::ONE;
    }
    use rust_decimal::prelude::ToPrimitive;
    n.to_u64()
        .map(Breakeven::AfterTasks)
        .ok_or(PricingError::Overflow)
}
