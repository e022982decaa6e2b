//! Link-channel pair selection strategies and the energy-efficiency
//! coefficient.

use serde::{Deserialize, Serialize};
use std::fmt;
use std::str::FromStr;

use crate::channel::{LinkChannelStats, PathLossMode};
use crate::error::{Result, RtiError};
use crate::scalar::Scalar;

/// Variance floor applied before weighting a member pair.
pub const VARIANCE_FLOOR_DB2: f64 = 0.01;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Strategy {
    #[serde(rename = "OUT+")]
    OutPlus,
    #[serde(rename = "OUT_w")]
    OutWeighted,
    #[serde(rename = "COM+")]
    ComPlus,
    #[serde(rename = "COM_w")]
    ComWeighted,
    #[serde(rename = "FLB_U")]
    FlbAll,
    #[serde(rename = "FLB_w")]
    FlbWeighted,
    #[serde(rename = "FLB+")]
    FlbPlus,
    #[serde(rename = "RFL_p")]
    RflPositive,
    #[serde(rename = "RFL_f")]
    RflFiltered,
    #[serde(rename = "RFL+")]
    RflPlus,
}

/// How a link's selected channels are turned into one RSS change.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Combining {
    /// One channel per link.
    SingleChannel,
    /// Weighted average over the link's selected channels.
    WeightedAverage,
}

impl Strategy {
    pub const ALL: [Strategy; 10] = [
        Strategy::OutPlus,
        Strategy::OutWeighted,
        Strategy::ComPlus,
        Strategy::ComWeighted,
        Strategy::FlbAll,
        Strategy::FlbWeighted,
        Strategy::FlbPlus,
        Strategy::RflPositive,
        Strategy::RflFiltered,
        Strategy::RflPlus,
    ];

    pub fn label(self) -> &'static str {
        match self {
            Strategy::OutPlus => "OUT+",
            Strategy::OutWeighted => "OUT_w",
            Strategy::ComPlus => "COM+",
            Strategy::ComWeighted => "COM_w",
            Strategy::FlbAll => "FLB_U",
            Strategy::FlbWeighted => "FLB_w",
            Strategy::FlbPlus => "FLB+",
            Strategy::RflPositive => "RFL_p",
            Strategy::RflFiltered => "RFL_f",
            Strategy::RflPlus => "RFL+",
        }
    }

    /// Path-loss model whose fade levels drive the strategy. Relative fade
    /// level strategies need none.
    pub fn path_loss_mode(self) -> Option<PathLossMode> {
        match self {
            Strategy::OutPlus | Strategy::OutWeighted => Some(PathLossMode::NodeSpecific),
            Strategy::ComPlus
            | Strategy::ComWeighted
            | Strategy::FlbAll
            | Strategy::FlbWeighted
            | Strategy::FlbPlus => Some(PathLossMode::Global),
            Strategy::RflPositive | Strategy::RflFiltered | Strategy::RflPlus => None,
        }
    }

    pub fn combining(self) -> Combining {
        match self {
            Strategy::OutPlus | Strategy::ComPlus | Strategy::FlbPlus | Strategy::RflPlus => {
                Combining::SingleChannel
            }
            _ => Combining::WeightedAverage,
        }
    }
}

impl fmt::Display for Strategy {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.label())
    }
}

impl FromStr for Strategy {
    type Err = RtiError;

    fn from_str(s: &str) -> Result<Self> {
        let key: String = s
            .chars()
            .filter(|c| !matches!(c, '_' | '^' | '-' | ' '))
            .collect::<String>()
            .to_ascii_uppercase();
        Ok(match key.as_str() {
            "OUT+" | "OUTPLUS" => Strategy::OutPlus,
            "OUTW" => Strategy::OutWeighted,
            "COM+" | "COMPLUS" => Strategy::ComPlus,
            "COMW" => Strategy::ComWeighted,
            "FLBU" => Strategy::FlbAll,
            "FLBW" => Strategy::FlbWeighted,
            "FLB+" | "FLBPLUS" => Strategy::FlbPlus,
            "RFLP" => Strategy::RflPositive,
            "RFLF" => Strategy::RflFiltered,
            "RFL+" | "RFLPLUS" => Strategy::RflPlus,
            _ => return Err(RtiError::Parse(format!("unknown strategy '{s}'"))),
        })
    }
}

/// A strategy together with its connectivity threshold `Υ_r`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SelectionStrategy<T> {
    pub strategy: Strategy,
    pub upsilon_r: T,
}

impl<T: Scalar> SelectionStrategy<T> {
    pub fn new(strategy: Strategy, upsilon_r: T) -> Result<Self> {
        if upsilon_r > T::of(-80.0) {
            return Err(RtiError::InvalidParameter(format!(
                "connectivity threshold {upsilon_r} dBm is above -80 dBm"
            )));
        }
        Ok(Self { strategy, upsilon_r })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum SetTag {
    Lp,
    Lr,
    Ls,
    L,
}

impl SetTag {
    pub fn label(self) -> &'static str {
        match self {
            SetTag::Lp => "Lp",
            SetTag::Lr => "Lr",
            SetTag::Ls => "Ls",
            SetTag::L => "L",
        }
    }
}

impl FromStr for SetTag {
    type Err = RtiError;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "Lp" => Ok(SetTag::Lp),
            "Lr" => Ok(SetTag::Lr),
            "Ls" => Ok(SetTag::Ls),
            "L" => Ok(SetTag::L),
            _ => Err(RtiError::Parse(format!("unknown selection set '{s}'"))),
        }
    }
}

/// Outcome of a selection run. Sets hold pair indices in ascending order.
#[derive(Debug, Clone, PartialEq)]
pub struct SelectionSet<T> {
    pub strategy: Strategy,
    /// Model mode of the fade levels used, `None` for relative fade levels.
    pub model_mode: Option<PathLossMode>,
    pub positive: Vec<usize>,
    pub connected: Vec<usize>,
    pub candidates: Vec<usize>,
    pub selected: Vec<usize>,
    /// Weight per pair index (zero outside `selected`).
    pub weights: Vec<T>,
    /// Selected `(pair index, weight)` per link, in link order.
    pub per_link: Vec<Vec<(usize, T)>>,
}

impl<T: Scalar> SelectionSet<T> {
    pub fn is_empty(&self) -> bool {
        self.selected.is_empty()
    }

    pub fn len(&self) -> usize {
        self.selected.len()
    }

    pub fn combining(&self) -> Combining {
        self.strategy.combining()
    }

    pub fn set(&self, tag: SetTag) -> &[usize] {
        match tag {
            SetTag::Lp => &self.positive,
            SetTag::Lr => &self.connected,
            SetTag::Ls => &self.candidates,
            SetTag::L => &self.selected,
        }
    }
}

/// `ρ = F / σ²` for members of the candidate set, zero otherwise. The
/// variance is floored at [`VARIANCE_FLOOR_DB2`].
pub fn pair_weight<T: Scalar>(fade: T, variance: T, member: bool) -> T {
    if !member {
        return T::zero();
    }
    fade / variance.max(T::of(VARIANCE_FLOOR_DB2))
}

/// `F_rel = r̄ - min over the link's measured channels of r̄`.
pub fn relative_fade_levels<T: Scalar>(stats: &LinkChannelStats<T>) -> Vec<Option<T>> {
    let table = &stats.table;
    let mut out = vec![None; table.len()];
    for link in 0..table.link_count() {
        let range = table.pairs_of_link(link);
        let min = range
            .clone()
            .filter_map(|i| stats.pairs[i].map(|p| p.mean))
            .reduce(|a, b| a.min(b));
        if let Some(min) = min {
            for i in range {
                out[i] = stats.pairs[i].map(|p| p.mean - min);
            }
        }
    }
    out
}

/// Index of the largest score, ties broken by the lowest channel number.
fn argmax_channel<T: Scalar>(
    stats: &LinkChannelStats<T>,
    scored: impl IntoIterator<Item = (usize, T)>,
) -> Option<(usize, T)> {
    let channels = stats.table.channels();
    let c = channels.len();
    scored.into_iter().fold(None, |best, (i, s)| match best {
        None => Some((i, s)),
        Some((bi, bs)) => {
            if s > bs || (s == bs && channels[i % c] < channels[bi % c]) {
                Some((i, s))
            } else {
                Some((bi, bs))
            }
        }
    })
}

/// Applies a selection strategy to calibration statistics.
///
/// Fade-level strategies need `stats` with fade levels from the model mode the
/// strategy expects. An empty selection is returned as such.
pub fn select<T: Scalar>(
    stats: &LinkChannelStats<T>,
    strategy: &SelectionStrategy<T>,
) -> Result<SelectionSet<T>> {
    let kind = strategy.strategy;
    let wanted = kind.path_loss_mode();
    if let Some(mode) = wanted.filter(|_| stats.fade_mode != wanted) {
        return Err(RtiError::StrategyUnavailable {
            strategy: kind.label().into(),
            reason: format!("needs fade levels from a {mode:?} model, got {:?}", stats.fade_mode),
        });
    }
    let table = &stats.table;
    let n = table.len();
    let fade: Vec<Option<T>> = match wanted {
        Some(_) => stats.pairs.iter().map(|p| p.and_then(|p| p.fade)).collect(),
        None => relative_fade_levels(stats),
    };

    let positive: Vec<usize> = (0..n).filter(|&i| fade[i].is_some_and(|f| f > T::zero())).collect();
    // Pairs unseen during calibration fail the connectivity test.
    let connected: Vec<usize> = (0..n)
        .filter(|&i| stats.pairs[i].is_some_and(|p| p.mean > strategy.upsilon_r))
        .collect();
    let mut is_connected = vec![false; n];
    connected.iter().for_each(|&i| is_connected[i] = true);
    let candidates: Vec<usize> = positive.iter().copied().filter(|&i| is_connected[i]).collect();
    let mut is_candidate = vec![false; n];
    candidates.iter().for_each(|&i| is_candidate[i] = true);

    let mut weights = vec![T::zero(); n];
    let mut per_link: Vec<Vec<(usize, T)>> = vec![Vec::new(); table.link_count()];
    let variance_weight = |i: usize| {
        let p = stats.pairs[i].expect("candidate pairs are measured");
        pair_weight(fade[i].expect("candidate pairs have fade"), p.variance, is_candidate[i])
    };

    for (link, slot) in per_link.iter_mut().enumerate() {
        let range = table.pairs_of_link(link);
        let chosen: Vec<(usize, T)> = match kind {
            Strategy::OutPlus | Strategy::ComPlus => argmax_channel(
                stats,
                range.filter(|&i| is_candidate[i]).map(|i| (i, variance_weight(i))),
            )
            .into_iter()
            .collect(),
            Strategy::OutWeighted | Strategy::ComWeighted => range
                .filter(|&i| is_candidate[i])
                .map(|i| (i, variance_weight(i)))
                .collect(),
            Strategy::FlbAll => range
                .filter(|&i| stats.pairs[i].is_some())
                .map(|i| (i, T::one()))
                .collect(),
            Strategy::FlbWeighted | Strategy::RflFiltered => range
                .filter(|&i| is_candidate[i])
                .map(|i| (i, fade[i].expect("candidate")))
                .collect(),
            Strategy::RflPositive => range
                .filter(|&i| fade[i].is_some_and(|f| f > T::zero()))
                .map(|i| (i, fade[i].expect("positive")))
                .collect(),
            Strategy::FlbPlus | Strategy::RflPlus => argmax_channel(
                stats,
                range
                    .filter(|&i| is_connected[i])
                    .filter_map(|i| fade[i].map(|f| (i, f))),
            )
            .into_iter()
            .collect(),
        };
        for &(i, w) in &chosen {
            weights[i] = w;
        }
        *slot = chosen;
    }
    let selected: Vec<usize> = per_link.iter().flatten().map(|&(i, _)| i).collect();
    if selected.is_empty() {
        log::warn!("strategy {} selected no link-channel pairs", kind.label());
    }
    Ok(SelectionSet {
        strategy: kind,
        model_mode: wanted,
        positive,
        connected,
        candidates,
        selected,
        weights,
        per_link,
    })
}

/// `ϑ_e = 1 - |L| / (N (N - 1) |C|)`.
pub fn energy_coefficient<T: Scalar>(selected: usize, nodes: usize, channels: usize) -> Result<T> {
    mean_energy_coefficient(T::of_usize(selected), nodes, channels)
}

/// Energy coefficient for a mean selection size, e.g. averaged over
/// reselections or given as a fraction of all pairs.
pub fn mean_energy_coefficient<T: Scalar>(selected: T, nodes: usize, channels: usize) -> Result<T> {
    let total = nodes * nodes.saturating_sub(1) * channels;
    if total == 0 || !(selected >= T::zero()) || selected > T::of_usize(total) {
        return Err(RtiError::InvalidParameter(format!(
            "cannot select {selected} of {total} link-channel pairs"
        )));
    }
    Ok(T::one() - selected / T::of_usize(total))
}
