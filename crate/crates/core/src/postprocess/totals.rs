//! Joint choice of Total, LineTotal, TaxTotal and TaxPercent.
//!
//! Amounts are integer cents and percentages integer hundredths, so the
//! arithmetic checks are exact.

use serde::{Deserialize, Serialize};

use crate::features::parse::format_cents;

/// Slot order used throughout this module.
pub const TOTAL: usize = 0;
pub const LINE_TOTAL: usize = 1;
pub const TAX_TOTAL: usize = 2;
pub const TAX_PERCENT: usize = 3;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase", default)]
pub struct TotalsConfig {
    /// Candidates kept per field, by probability.
    pub beam: usize,
    pub absent_penalty: f64,
    /// Cost per violated arithmetic constraint.
    pub lambda: f64,
    /// Tolerance of the arithmetic checks, in currency units.
    pub epsilon: f64,
}

impl Default for TotalsConfig {
    fn default() -> Self {
        TotalsConfig { beam: 5, absent_penalty: 0.5, lambda: 1.0, epsilon: 0.01 }
    }
}

/// A candidate value for one slot: cents, or hundredths of a percent.
#[derive(Clone, Debug, PartialEq)]
pub struct TotalsCandidate {
    pub value: i64,
    pub prob: f64,
    /// Caller's reference back to the originating candidate.
    pub id: usize,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Slot {
    Chosen { value: i64, id: usize },
    Computed { value: i64 },
    Absent,
}

impl Slot {
    pub fn value(self) -> Option<i64> {
        match self {
            Slot::Chosen { value, .. } | Slot::Computed { value } => Some(value),
            Slot::Absent => None,
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct TotalsAssignment {
    pub slots: [Slot; 4],
    pub cost: f64,
    /// No checkable constraint is violated by the final values.
    pub consistent: bool,
}

impl TotalsAssignment {
    /// Canonical text for a slot: amounts as "123.45", the percentage as "25.00".
    pub fn canonical(&self, slot: usize) -> Option<String> {
        self.slots[slot].value().map(format_cents)
    }
}

fn tolerance_cents(epsilon: f64) -> i128 {
    (epsilon * 100.0).round() as i128
}

/// Number of violated constraints among those whose three values are known.
pub fn violations(values: [Option<i64>; 4], epsilon: f64) -> usize {
    let tol = tolerance_cents(epsilon);
    let mut n = 0;
    if let (Some(t), Some(l), Some(x)) = (values[TOTAL], values[LINE_TOTAL], values[TAX_TOTAL]) {
        n += usize::from((i128::from(l) + i128::from(x) - i128::from(t)).abs() > tol);
    }
    if let (Some(l), Some(x), Some(p)) = (values[LINE_TOTAL], values[TAX_TOTAL], values[TAX_PERCENT]) {
        // |l·p/100 − x| ≤ ε, scaled by 10^4 to stay in integers
        n += usize::from((i128::from(l) * i128::from(p) - i128::from(x) * 10_000).abs() > tol * 10_000);
    }
    n
}

fn div_round(num: i128, den: i128) -> i128 {
    let q = num / den;
    let r = num % den;
    if 2 * r.abs() >= den.abs() {
        q + if (r < 0) != (den < 0) { -1 } else { 1 }
    } else {
        q
    }
}

/// The value of the single absent slot implied by the other three, if any.
pub fn complete(values: [Option<i64>; 4]) -> Option<(usize, i64)> {
    let absent: Vec<usize> = (0..4).filter(|&i| values[i].is_none()).collect();
    let [slot] = absent[..] else { return None };
    let v = |i: usize| i128::from(values[i].expect("only one slot is absent"));
    let computed = match slot {
        TOTAL => v(LINE_TOTAL) + v(TAX_TOTAL),
        LINE_TOTAL => v(TOTAL) - v(TAX_TOTAL),
        TAX_TOTAL => v(TOTAL) - v(LINE_TOTAL),
        _ => {
            if v(LINE_TOTAL) == 0 {
                return None;
            }
            div_round(v(TAX_TOTAL) * 10_000, v(LINE_TOTAL))
        }
    };
    i64::try_from(computed).ok().map(|c| (slot, c))
}

/// Keeps the `beam` most probable candidates; ties keep the earlier one.
pub fn top_k(mut cands: Vec<TotalsCandidate>, beam: usize) -> Vec<TotalsCandidate> {
    cands.sort_by(|a, b| b.prob.total_cmp(&a.prob));
    cands.truncate(beam);
    cands
}

/// Exhaustive search over every combination of the per-slot beams and
/// absence. Options are tried candidates first (most probable first), then
/// absence; the first combination at the minimum cost wins.
pub fn assign_totals(slots: [Vec<TotalsCandidate>; 4], config: &TotalsConfig) -> TotalsAssignment {
    let beams: Vec<Vec<TotalsCandidate>> = slots.into_iter().map(|c| top_k(c, config.beam)).collect();
    let options = |i: usize| beams[i].len() + 1;
    let mut best: Option<([Option<usize>; 4], f64)> = None;
    let mut pick = [0usize; 4];
    loop {
        let chosen: [Option<usize>; 4] = std::array::from_fn(|i| (pick[i] < beams[i].len()).then_some(pick[i]));
        let values: [Option<i64>; 4] = std::array::from_fn(|i| chosen[i].map(|k| beams[i][k].value));
        let mut cost = 0.0;
        for i in 0..4 {
            cost += chosen[i].map_or(config.absent_penalty, |k| 1.0 - beams[i][k].prob);
        }
        cost += config.lambda * violations(values, config.epsilon) as f64;
        if best.as_ref().is_none_or(|b| cost < b.1) {
            best = Some((chosen, cost));
        }
        // odometer over the option indices, last slot fastest
        let mut i = 4;
        loop {
            if i == 0 {
                let (chosen, cost) = best.expect("at least one combination");
                return finish(&beams, chosen, cost, config);
            }
            i -= 1;
            pick[i] += 1;
            if pick[i] < options(i) {
                break;
            }
            pick[i] = 0;
        }
    }
}

fn finish(beams: &[Vec<TotalsCandidate>], chosen: [Option<usize>; 4], cost: f64, config: &TotalsConfig) -> TotalsAssignment {
    let mut slots: [Slot; 4] = std::array::from_fn(|i| match chosen[i] {
        Some(k) => Slot::Chosen { value: beams[i][k].value, id: beams[i][k].id },
        None => Slot::Absent,
    });
    let values: [Option<i64>; 4] = std::array::from_fn(|i| slots[i].value());
    if let Some((slot, value)) = complete(values) {
        slots[slot] = Slot::Computed { value };
    }
    let final_values: [Option<i64>; 4] = std::array::from_fn(|i| slots[i].value());
    let consistent = violations(final_values, config.epsilon) == 0;
    TotalsAssignment { slots, cost, consistent }
}
