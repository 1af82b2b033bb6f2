//! Non-dominated sets, the convex accuracy-cost frontier, and mixture policies.
//!
//! Dominance and hull tests run on exact rationals: costs are exact decimals
//! and accuracies are fractions (successes over tasks, or exact decimals), so
//! near-collinear points are never misclassified by rounding.
//!
//! Any point on a segment between two agents is reachable by a randomized
//! agent that invokes one with probability `p` and the other otherwise. The
//! frontier is therefore the upper-left convex hull of the non-dominated
//! points; collinear interior points are dropped since a mixture reproduces them.

use std::cmp::Ordering;
use std::fmt;
use std::str::FromStr;

use num_bigint::BigInt;
use num_rational::BigRational;
use num_traits::{One, Signed, ToPrimitive, Zero};
use rust_decimal::Decimal;
use serde::{Deserialize, Deserializer, Serialize, Serializer};
use thiserror::Error;

use crate::pricing::{Currency, Money, PricingError};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ParetoError {
    #[error("no points given")]
    EmptyInput,
    #[error(transparent)]
    Currency(#[from] PricingError),
    #[error("point {0:?} has a negative cost")]
    NegativeCost(String),
    #[error("value {0} is not a probability in [0, 1]")]
    OutOfUnitRange(String),
    #[error("invalid fraction {0:?}")]
    InvalidFraction(String),
    #[error("constraint cannot be met by any frontier point or mixture")]
    Infeasible,
}

/// An exact rational in `[0, 1]`.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct UnitRational(BigRational);

impl UnitRational {
    pub fn new(value: BigRational) -> Result<Self, ParetoError> {
        if value.is_negative() || value > BigRational::one() {
            return Err(ParetoError::OutOfUnitRange(value.to_string()));
        }
        Ok(UnitRational(value))
    }

    pub fn from_fraction(num: u64, den: u64) -> Result<Self, ParetoError> {
        if den == 0 {
            return Err(ParetoError::InvalidFraction(format!("{num}/{den}")));
        }
        Self::new(BigRational::new(num.into(), den.into()))
    }

    pub fn from_decimal(value: Decimal) -> Result<Self, ParetoError> {
        Self::new(decimal_to_rational(value))
    }

    /// The exact value of a binary float.
    pub fn from_f64(value: f64) -> Result<Self, ParetoError> {
        let r = BigRational::from_float(value)
            .ok_or_else(|| ParetoError::OutOfUnitRange(value.to_string()))?;
        Self::new(r)
    }

    pub fn zero() -> Self {
        UnitRational(BigRational::zero())
    }

    pub fn one() -> Self {
        UnitRational(BigRational::one())
    }

    pub fn ratio(&self) -> &BigRational {
        &self.0
    }

    pub fn to_f64(&self) -> f64 {
        self.0.to_f64().unwrap_or(f64::NAN)
    }

    pub fn complement(&self) -> Self {
        UnitRational(BigRational::one() - &self.0)
    }
}

impl fmt::Display for UnitRational {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.0)
    }
}

impl FromStr for UnitRational {
    type Err = ParetoError;

    /// Accepts `"num/den"` or a plain decimal such as `"0.739"`.
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let s = s.trim();
        let bad = || ParetoError::InvalidFraction(s.to_owned());
        if let Some((n, d)) = s.split_once('/') {
            let n: BigInt = n.trim().parse().map_err(|_| bad())?;
            let d: BigInt = d.trim().parse().map_err(|_| bad())?;
            if d.is_zero() {
                return Err(bad());
            }
            Self::new(BigRational::new(n, d))
        } else {
            Self::from_decimal(Decimal::from_str(s).map_err(|_| bad())?)
        }
    }
}

impl Serialize for UnitRational {
    fn serialize<S: Serializer>(&self, serializer: S) -> Result<S::Ok, S::Error> {
        serializer.serialize_str(&self.to_string())
    }
}

impl<'de> Deserialize<'de> for UnitRational {
    fn deserialize<D: Deserializer<'de>>(deserializer: D) -> Result<Self, D::Error> {
        let raw = String::deserialize(deserializer)?;
        raw.parse().map_err(serde::de::Error::custom)
    }
}

/// Fraction of tasks solved.
pub type Accuracy = UnitRational;

/// Probability of invoking the first agent of a mixture.
pub type Probability = UnitRational;

pub(crate) fn decimal_to_rational(value: Decimal) -> BigRational {
    let mantissa = BigInt::from(value.mantissa());
    let denom = BigInt::from(10u8).pow(value.scale());
    BigRational::new(mantissa, denom)
}

/// Rounds half-even at 20 decimals (fewer if the mantissa would not fit).
pub(crate) fn rational_to_decimal(value: &BigRational) -> Decimal {
    for scale in (0..=20u32).rev() {
        let scaled = value * BigRational::from_integer(BigInt::from(10u8).pow(scale));
        let rounded = round_half_even(&scaled);
        if let Some(m) = rounded.to_i128() {
            if let Ok(d) = Decimal::try_from_i128_with_scale(m, scale) {
                return d.normalize();
            }
        }
    }
    Decimal::MAX
}

fn round_half_even(value: &BigRational) -> BigInt {
    let floor = value.floor();
    let frac = value - &floor;
    let half = BigRational::new(1.into(), 2.into());
    let base = floor.to_integer();
    match frac.cmp(&half) {
        Ordering::Less => base,
        Ordering::Greater => base + 1,
        Ordering::Equal => {
            if (&base % BigInt::from(2)).is_zero() {
                base
            } else {
                base + 1
            }
        }
    }
}

/// A labelled (mean cost, mean accuracy) pair with optional intervals.
#[derive(Debug, Clone, PartialEq)]
pub struct ParetoPoint {
    pub label: String,
    pub cost: Money,
    pub accuracy: Accuracy,
    pub accuracy_ci: Option<(f64, f64)>,
    pub cost_ci: Option<(f64, f64)>,
}

impl ParetoPoint {
    pub fn new(label: impl Into<String>, cost: Money, accuracy: Accuracy) -> Self {
        ParetoPoint {
            label: label.into(),
            cost,
            accuracy,
            accuracy_ci: None,
            cost_ci: None,
        }
    }

    fn cost_q(&self) -> BigRational {
        decimal_to_rational(self.cost.amount())
    }

    fn same_coordinates(&self, other: &ParetoPoint) -> bool {
        self.cost.amount() == other.cost.amount() && self.accuracy == other.accuracy
    }
}

#[derive(Serialize)]
struct PointOut<'a> {
    label: &'a str,
    cost: String,
    accuracy: f64,
    accuracy_exact: String,
    accuracy_ci: Option<(f64, f64)>,
    cost_ci: Option<(f64, f64)>,
}

impl Serialize for ParetoPoint {
    fn serialize<S: Serializer>(&self, serializer: S) -> Result<S::Ok, S::Error> {
        PointOut {
            label: &self.label,
            cost: self.cost.to_fixed(),
            accuracy: self.accuracy.to_f64(),
            accuracy_exact: self.accuracy.to_string(),
            accuracy_ci: self.accuracy_ci,
            cost_ci: self.cost_ci,
        }
        .serialize(serializer)
    }
}

fn check_points(points: &[ParetoPoint]) -> Result<Currency, ParetoError> {
    let first = points.first().ok_or(ParetoError::EmptyInput)?;
    for p in points {
        first.cost.try_cmp(&p.cost)?;
        if p.cost.amount() < Decimal::ZERO {
            return Err(ParetoError::NegativeCost(p.label.clone()));
        }
    }
    Ok(first.cost.currency().clone())
}

/// Indices of the items not dominated under (minimize cost, maximize value),
/// ordered by ascending cost. Items with identical coordinates never dominate
/// each other, so duplicates survive together.
pub fn non_dominated_indices<C: Ord, V: Ord>(items: &[(C, V)]) -> Vec<usize> {
    let mut order: Vec<usize> = (0..items.len()).collect();
    order.sort_by(|&i, &j| {
        items[i]
            .0
            .cmp(&items[j].0)
            .then(items[j].1.cmp(&items[i].1))
            .then(i.cmp(&j))
    });
    let mut keep = Vec::new();
    let mut best_cheaper: Option<&V> = None;
    let mut g = 0;
    while g < order.len() {
        let cost = &items[order[g]].0;
        let group_end = order[g..]
            .iter()
            .position(|&i| items[i].0 != *cost)
            .map_or(order.len(), |k| g + k);
        let top = &items[order[g]].1;
        if best_cheaper.is_none_or(|b| top > b) {
            keep.extend(
                order[g..group_end]
                    .iter()
                    .copied()
                    .filter(|&i| items[i].1 == *top),
            );
            best_cheaper = Some(top);
        }
        g = group_end;
    }
    keep
}

/// The points no other point dominates, in ascending cost order.
pub fn non_dominated(points: &[ParetoPoint]) -> Result<Vec<ParetoPoint>, ParetoError> {
    check_points(points)?;
    let keys: Vec<(Decimal, &Accuracy)> = points
        .iter()
        .map(|p| (p.cost.amount(), &p.accuracy))
        .collect();
    Ok(non_dominated_indices(&keys)
        .into_iter()
        .map(|i| points[i].clone())
        .collect())
}

/// Upper-left convex hull vertices, strictly increasing in cost and accuracy
/// with strictly decreasing slopes.
#[derive(Debug, Clone, PartialEq, Serialize)]
#[serde(transparent)]
pub struct Frontier {
    vertices: Vec<ParetoPoint>,
}

impl Frontier {
    pub fn vertices(&self) -> &[ParetoPoint] {
        &self.vertices
    }

    pub fn labels(&self) -> Vec<&str> {
        self.vertices.iter().map(|v| v.label.as_str()).collect()
    }

    pub fn contains(&self, label: &str) -> bool {
        self.vertices.iter().any(|v| v.label == label)
    }

    /// Best accuracy reachable at exactly `cost` by a vertex or two-vertex mixture,
    /// or `None` below the cheapest vertex.
    pub fn accuracy_at(&self, cost: &Money) -> Option<BigRational> {
        let c = decimal_to_rational(cost.amount());
        let first = self.vertices.first()?;
        if c < first.cost_q() {
            return None;
        }
        for w in self.vertices.windows(2) {
            let (a, b) = (&w[0], &w[1]);
            let (ca, cb) = (a.cost_q(), b.cost_q());
            if c <= cb {
                let t = (&c - &ca) / (&cb - &ca);
                return Some(a.accuracy.ratio() + t * (b.accuracy.ratio() - a.accuracy.ratio()));
            }
        }
        Some(self.vertices.last()?.accuracy.ratio().clone())
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("frontier serializes")
    }
}

/// Twice the signed area of (a, b, c); negative when b lies strictly above chord ac.
fn cross(a: &ParetoPoint, b: &ParetoPoint, c: &ParetoPoint) -> BigRational {
    let (ax, bx, cx) = (a.cost_q(), b.cost_q(), c.cost_q());
    let (ay, by, cy) = (a.accuracy.ratio(), b.accuracy.ratio(), c.accuracy.ratio());
    (bx - &ax) * (cy - ay) - (by - ay) * (cx - ax)
}

/// Upper-left convex hull of `points` (Andrew's monotone chain on the non-dominated set).
pub fn convex_frontier(points: &[ParetoPoint]) -> Result<Frontier, ParetoError> {
    let candidates = non_dominated(points)?;
    // Identical coordinates collapse to the lexicographically smallest label.
    let mut unique: Vec<ParetoPoint> = Vec::with_capacity(candidates.len());
    for p in candidates {
        match unique.last_mut() {
            Some(last) if last.same_coordinates(&p) => {
                if p.label < last.label {
                    *last = p;
                }
            }
            _ => unique.push(p),
        }
    }
    let mut hull: Vec<ParetoPoint> = Vec::with_capacity(unique.len());
    for p in unique {
        while hull.len() >= 2
            && !cross(&hull[hull.len() - 2], &hull[hull.len() - 1], &p).is_negative()
        {
            hull.pop();
        }
        hull.push(p);
    }
    Ok(Frontier { vertices: hull })
}

/// A randomized agent invoking `a` with probability `p` and `b` otherwise.
#[derive(Debug, Clone, PartialEq)]
pub struct MixturePolicy {
    pub a: ParetoPoint,
    pub b: ParetoPoint,
    pub p: Probability,
}

impl MixturePolicy {
    pub fn new(a: ParetoPoint, b: ParetoPoint, p: Probability) -> Result<Self, ParetoError> {
        a.cost.try_cmp(&b.cost)?;
        Ok(MixturePolicy { a, b, p })
    }

    pub fn expected_cost_exact(&self) -> BigRational {
        self.p.ratio() * self.a.cost_q() + self.p.complement().ratio() * self.b.cost_q()
    }

    pub fn expected_cost(&self) -> Money {
        Money::new(
            rational_to_decimal(&self.expected_cost_exact()),
            self.a.cost.currency().clone(),
        )
    }

    pub fn expected_accuracy(&self) -> Accuracy {
        let r = self.p.ratio() * self.a.accuracy.ratio()
            + self.p.complement().ratio() * self.b.accuracy.ratio();
        UnitRational(r)
    }

    pub fn as_point(&self) -> ParetoPoint {
        ParetoPoint::new(
            format!("mix({},{},{})", self.a.label, self.b.label, self.p.to_f64()),
            self.expected_cost(),
            self.expected_accuracy(),
        )
    }
}

/// The expected (cost, accuracy) of invoking `a` with probability `p` and `b` otherwise.
pub fn mixture(
    a: &ParetoPoint,
    b: &ParetoPoint,
    p: &Probability,
) -> Result<ParetoPoint, ParetoError> {
    Ok(MixturePolicy::new(a.clone(), b.clone(), p.clone())?.as_point())
}

#[derive(Debug, Clone, PartialEq)]
pub enum Constraint {
    MaxBudget(Money),
    MinAccuracy(Accuracy),
}

#[derive(Debug, Clone, PartialEq)]
#[allow(clippy::large_enum_variant)]
pub enum Recommendation {
    Point(ParetoPoint),
    Mixture(MixturePolicy),
}

impl Recommendation {
    pub fn expected_cost(&self) -> Money {
        match self {
            Recommendation::Point(p) => p.cost.clone(),
            Recommendation::Mixture(m) => m.expected_cost(),
        }
    }

    pub fn expected_accuracy(&self) -> Accuracy {
        match self {
            Recommendation::Point(p) => p.accuracy.clone(),
            Recommendation::Mixture(m) => m.expected_accuracy(),
        }
    }
}

/// The best frontier point or two-vertex mixture under a budget or an accuracy floor.
///
/// Under a budget the expected accuracy is maximized subject to expected cost
/// ≤ budget; under a floor the expected cost is minimized subject to expected
/// accuracy ≥ floor.
pub fn recommend(
    frontier: &Frontier,
    constraint: &Constraint,
) -> Result<Recommendation, ParetoError> {
    let v = frontier.vertices();
    let first = v.first().ok_or(ParetoError::EmptyInput)?;
    let last = v.last().expect("non-empty");
    match constraint {
        Constraint::MaxBudget(budget) => {
            first.cost.try_cmp(budget)?;
            let b = decimal_to_rational(budget.amount());
            if b < first.cost_q() {
                return Err(ParetoError::Infeasible);
            }
            if b >= last.cost_q() {
                return Ok(Recommendation::Point(last.clone()));
            }
            for w in v.windows(2) {
                let (lo, hi) = (&w[0], &w[1]);
                let (cl, ch) = (lo.cost_q(), hi.cost_q());
                if b == cl {
                    return Ok(Recommendation::Point(lo.clone()));
                }
                if b < ch {
                    let p = UnitRational::new((&ch - &b) / (&ch - &cl))?;
                    return Ok(Recommendation::Mixture(MixturePolicy::new(
                        lo.clone(),
                        hi.clone(),
                        p,
                    )?));
                }
            }
            unreachable!("budget below the last vertex falls inside some segment")
        }
        Constraint::MinAccuracy(floor) => {
            if floor > &last.accuracy {
                return Err(ParetoError::Infeasible);
            }
            if floor <= &first.accuracy {
                return Ok(Recommendation::Point(first.clone()));
            }
            for w in v.windows(2) {
                let (lo, hi) = (&w[0], &w[1]);
                if floor == &hi.accuracy {
                    return Ok(Recommendation::Point(hi.clone()));
                }
                if floor < &hi.accuracy {
                    let (al, ah) = (lo.accuracy.ratio(), hi.accuracy.ratio());
                    let p = UnitRational::new((ah - floor.ratio()) / (ah - al))?;
                    return Ok(Recommendation::Mixture(MixturePolicy::new(
                        lo.clone(),
                        hi.clone(),
                        p,
                    )?));
                }
            }
            unreachable!("floor below the last vertex falls inside some segment")
        }
    }
}

/// Mean (cost, accuracy) of the HumanEval agents, five runs each, April 2024 prices.
pub fn humaneval_table_a1() -> Vec<ParetoPoint> {
    const ROWS: [(&str, &str, &str); 13] = [
        ("LATS (GPT-4)", "134.50", "0.880"),
        ("LATS (GPT-3.5)", "9.49", "0.804"),
        ("LDB (GPT-4, GPT-3.5)", "2.19", "0.910"),
        ("LDB (Reflexion, GPT-4)", "7.26", "0.929"),
        ("LDB (Reflexion, GPT-3.5)", "4.19", "0.889"),
        ("LDB (GPT-4)", "6.36", "0.933"),
        ("LDB (GPT-3.5)", "0.63", "0.802"),
        ("GPT-4", "1.93", "0.896"),
        ("GPT-3.5", "0.05", "0.739"),
        ("Reflexion (GPT-4)", "3.90", "0.878"),
        ("Warming (GPT-4)", "2.45", "0.932"),
        ("Retry (GPT-4)", "2.51", "0.920"),
        ("Escalation", "0.27", "0.850"),
    ];
    ROWS.iter()
        .map(|(label, cost, acc)| {
            ParetoPoint::new(
                *label,
                Money::parse(cost, Currency::usd()).expect("fixture cost"),
                acc.parse().expect("fixture accuracy"),
            )
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn pt(label: &str, cost: &str, acc: &str) -> ParetoPoint {
        ParetoPoint::new(
            label,
            Money::parse(cost, Currency::usd()).unwrap(),
            acc.parse().unwrap(),
        )
    }

    fn labels(points: &[ParetoPoint]) -> Vec<&str> {
        points.iter().map(|p| p.label.as_str()).collect()
    }

    #[test]
    fn single_point() {
        let p = vec![pt("a", "1", "0.5")];
        assert_eq!(non_dominated(&p).unwrap(), p);
        assert_eq!(convex_frontier(&p).unwrap().vertices(), &p[..]);
    }

    #[test]
    fn strict_domination() {
        let p = vec![pt("a", "1", "0.5"), pt("b", "2", "0.4")];
        assert_eq!(labels(&non_dominated(&p).unwrap()), ["a"]);
    }

    #[test]
    fn duplicates_kept_by_filter_collapsed_by_hull() {
        let p = vec![
            pt("z", "1", "0.5"),
            pt("y", "1", "0.5"),
            pt("x", "0.5", "0.1"),
        ];
        assert_eq!(labels(&non_dominated(&p).unwrap()), ["x", "z", "y"]);
        assert_eq!(convex_frontier(&p).unwrap().labels(), ["x", "y"]);
    }

    #[test]
    fn equal_cost_keeps_higher_accuracy() {
        let p = vec![pt("lo", "1", "0.4"), pt("hi", "1", "0.6")];
        assert_eq!(labels(&non_dominated(&p).unwrap()), ["hi"]);
    }

    #[test]
    fn collinear_interior_points_dropped() {
        let p = vec![
            pt("a", "0", "0.1"),
            pt("b", "1", "0.2"),
            pt("c", "2", "0.3"),
        ];
        assert_eq!(convex_frontier(&p).unwrap().labels(), ["a", "c"]);
    }

    #[test]
    fn table_a1_non_dominated() {
        let nd = non_dominated(&humaneval_table_a1()).unwrap();
        assert_eq!(
            labels(&nd),
            [
                "GPT-3.5",
                "Escalation",
                "GPT-4",
                "LDB (GPT-4, GPT-3.5)",
                "Warming (GPT-4)",
                "LDB (GPT-4)"
            ]
        );
    }

    #[test]
    fn table_a1_frontier_excludes_zero_shot_gpt4() {
        let f = convex_frontier(&humaneval_table_a1()).unwrap();
        assert_eq!(
            f.labels(),
            ["GPT-3.5", "Escalation", "Warming (GPT-4)", "LDB (GPT-4)"]
        );
        assert!(!f.contains("GPT-4"));
    }

    #[test]
    fn mixture_identity_and_midpoint() {
        let a = pt("a", "0", "0");
        let b = pt("b", "2", "1");
        let m = mixture(&a, &b, &Probability::one()).unwrap();
        assert_eq!(
            (m.cost.amount(), &m.accuracy),
            (a.cost.amount(), &a.accuracy)
        );
        let m = mixture(&a, &b, &"0.5".parse().unwrap()).unwrap();
        assert_eq!(m.cost.amount(), Decimal::ONE);
        assert_eq!(m.accuracy, "1/2".parse().unwrap());
        assert_eq!(m.label, "mix(a,b,0.5)");
    }

    #[test]
    fn mixture_of_escalation_and_warming() {
        let m = mixture(
            &pt("e", "0.27", "0.850"),
            &pt("w", "2.45", "0.932"),
            &"0.25".parse().unwrap(),
        )
        .unwrap();
        assert_eq!(m.cost.amount(), Decimal::from_str("1.905").unwrap());
        assert_eq!(m.accuracy, "0.9115".parse().unwrap());
    }

    #[test]
    fn mixture_rejects_bad_probability_and_currency() {
        assert!("1.5".parse::<Probability>().is_err());
        assert!(Probability::from_f64(-0.1).is_err());
        let eur = ParetoPoint::new("e", Money::zero("EUR".parse().unwrap()), Accuracy::zero());
        assert!(matches!(
            mixture(&pt("a", "1", "0.5"), &eur, &Probability::one()),
            Err(ParetoError::Currency(_))
        ));
    }

    fn budget(s: &str) -> Constraint {
        Constraint::MaxBudget(Money::parse(s, Currency::usd()).unwrap())
    }

    #[test]
    fn recommend_under_budget() {
        let f = convex_frontier(&humaneval_table_a1()).unwrap();
        match recommend(&f, &budget("1.36")).unwrap() {
            Recommendation::Mixture(m) => {
                assert_eq!(
                    (m.a.label.as_str(), m.b.label.as_str()),
                    ("Escalation", "Warming (GPT-4)")
                );
                assert_eq!(m.p, "1/2".parse().unwrap());
                assert_eq!(m.expected_accuracy(), "0.891".parse().unwrap());
                assert_eq!(
                    m.expected_cost().amount(),
                    Decimal::from_str("1.36").unwrap()
                );
            }
            other => panic!("expected mixture, got {other:?}"),
        }
        match recommend(&f, &budget("100")).unwrap() {
            Recommendation::Point(p) => assert_eq!(p.label, "LDB (GPT-4)"),
            other => panic!("{other:?}"),
        }
        assert_eq!(recommend(&f, &budget("0.01")), Err(ParetoError::Infeasible));
        match recommend(&f, &budget("0.27")).unwrap() {
            Recommendation::Point(p) => assert_eq!(p.label, "Escalation"),
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn recommend_under_accuracy_floor() {
        let f = convex_frontier(&humaneval_table_a1()).unwrap();
        let floor = |s: &str| Constraint::MinAccuracy(s.parse().unwrap());
        assert_eq!(recommend(&f, &floor("0.95")), Err(ParetoError::Infeasible));
        match recommend(&f, &floor("0.5")).unwrap() {
            Recommendation::Point(p) => assert_eq!(p.label, "GPT-3.5"),
            other => panic!("{other:?}"),
        }
        match recommend(&f, &floor("0.891")).unwrap() {
            Recommendation::Mixture(m) => {
                assert_eq!(m.p, "1/2".parse().unwrap());
                assert_eq!(
                    m.expected_cost().amount(),
                    Decimal::from_str("1.36").unwrap()
                );
            }
            other => panic!("{other:?}"),
        }
        match recommend(&f, &floor("0.932")).unwrap() {
            Recommendation::Point(p) => assert_eq!(p.label, "Warming (GPT-4)"),
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn rejects_mixed_currency_and_empty() {
        let eur = ParetoPoint::new("e", Money::zero("EUR".parse().unwrap()), Accuracy::zero());
        assert!(non_dominated(&[pt("a", "1", "0.5"), eur]).is_err());
        assert_eq!(non_dominated(&[]), Err(ParetoError::EmptyInput));
        assert_eq!(convex_frontier(&[]), Err(ParetoError::EmptyInput));
    }

    #[test]
    fn rational_to_decimal_rounds_half_even() {
        let third = BigRational::new(1.into(), 3.into());
        assert_eq!(
            rational_to_decimal(&third).to_string(),
            "0.33333333333333333333"
        );
        let r = BigRational::new(1905.into(), 1000.into());
        assert_eq!(rational_to_decimal(&r).to_string(), "1.905");
    }

    fn arb_points() -> impl Strategy<Value = Vec<ParetoPoint>> {
        proptest::collection::vec((0u64..8, 0u64..6), 1..10).prop_map(|v| {
            v.into_iter()
                .enumerate()
                .map(|(i, (c, a))| {
                    ParetoPoint::new(
                        format!("p{i}"),
                        Money::usd(Decimal::from(c)),
                        Accuracy::from_fraction(a, 5).unwrap(),
                    )
                })
                .collect()
        })
    }

    proptest! {
        #[test]
        fn filter_is_idempotent(points in arb_points()) {
            let once = non_dominated(&points).unwrap();
            let twice = non_dominated(&once).unwrap();
            prop_assert_eq!(once, twice);
        }

        #[test]
        fn hull_vertices_are_non_dominated_and_concave(points in arb_points()) {
            let nd = non_dominated(&points).unwrap();
            let f = convex_frontier(&points).unwrap();
            for v in f.vertices() {
                prop_assert!(nd.iter().any(|p| p.label == v.label));
            }
            for w in f.vertices().windows(3) {
                prop_assert!(cross(&w[0], &w[1], &w[2]).is_negative());
            }
            for w in f.vertices().windows(2) {
                prop_assert!(w[0].cost.amount() < w[1].cost.amount());
                prop_assert!(w[0].accuracy < w[1].accuracy);
            }
        }

        #[test]
        fn every_point_lies_on_or_below_the_frontier(points in arb_points()) {
            let f = convex_frontier(&points).unwrap();
            for p in &points {
                if let Some(best) = f.accuracy_at(&p.cost) {
                    prop_assert!(p.accuracy.ratio() <= &best);
                }
                else {
                    prop_assert!(p.cost.amount() < f.vertices()[0].cost.amount());
                }
            }
        }

        #[test]
        fn membership_is_invariant_under_price_scaling(points in arb_points(), k in 1i64..1000) {
            let factor = Decimal::new(k, 2);
            let scaled: Vec<ParetoPoint> = points
                .iter()
                .map(|p| ParetoPoint { cost: p.cost.scale(factor).unwrap(), ..p.clone() })
                .collect();
            let (nd, nd_scaled) = (non_dominated(&points).unwrap(), non_dominated(&scaled).unwrap());
            prop_assert_eq!(labels(&nd), labels(&nd_scaled));
            let (f, f_scaled) = (convex_frontier(&points).unwrap(), convex_frontier(&scaled).unwrap());
            prop_assert_eq!(f.labels(), f_scaled.labels());
        }
    }
}
