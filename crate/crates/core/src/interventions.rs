// SPDX-License-Identifier: MIT OR Apache-2.0

//! Activation surgery: value edits, scaled deltas, channel resampling and
//! the two steering vectors.

use std::collections::BTreeSet;
use std::sync::Arc;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::maze::{Coord, MazeError, MazeState, GRID};
use crate::net::{ActionDistribution, NetError, PolicyNetwork, Tensor, DEFAULT_TAP};
use crate::render::render_observation;

/// Channels whose activations localize the cheese.
pub const ALL_CHEESE: [usize; 11] = [7, 8, 42, 44, 55, 77, 82, 88, 89, 99, 113];
/// The subset that steers best together.
pub const EFFECTIVE: [usize; 7] = [8, 55, 77, 82, 88, 89, 113];
pub const SINGLE: [usize; 1] = [55];

#[derive(Debug, Error, Clone, PartialEq)]
pub enum InterventionError {
    #[error("maze has no cheese")]
    NoCheese,
    #[error(transparent)]
    Net(#[from] NetError),
    #[error(transparent)]
    Maze(#[from] MazeError),
    #[error("unknown reference `{0}`")]
    UnknownRef(String),
    #[error("invalid atom: {0}")]
    InvalidAtom(String),
}

/// Named channel sets with their default edit strength.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ChannelSet {
    Single,
    Effective,
    All,
}

impl ChannelSet {
    pub fn channels(self) -> &'static [usize] {
        match self {
            ChannelSet::Single => &SINGLE,
            ChannelSet::Effective => &EFFECTIVE,
            ChannelSet::All => &ALL_CHEESE,
        }
    }

    pub fn default_alpha(self) -> f32 {
        match self {
            ChannelSet::Single => 5.5,
            ChannelSet::Effective => 2.3,
            ChannelSet::All => 1.0,
        }
    }
}

/// Activation cell `(y, x)` of a game square: `round(g·15/24)` per axis,
/// halves rounding up, with the row axis flipped to image orientation.
pub fn grid_to_activation_cell(square: Coord) -> (usize, usize) {
    let map = |g: usize| (15 * g + 12) / 24;
    (map(GRID - 1 - square.row), map(square.col))
}

/// One edit applied at a tap.
#[derive(Debug, Clone, PartialEq)]
pub enum Atom {
    SetValue { tap: String, channel: usize, cell: (usize, usize), value: f32 },
    AddDelta { tap: String, delta: Arc<Tensor>, coeff: f32 },
    ResampleChannels { tap: String, channels: BTreeSet<usize>, donor: Arc<Tensor> },
}

impl Atom {
    pub fn tap(&self) -> &str {
        match self {
            Atom::SetValue { tap, .. } | Atom::AddDelta { tap, .. } | Atom::ResampleChannels { tap, .. } => tap,
        }
    }
}

/// Ordered list of atoms.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct InterventionSpec {
    pub atoms: Vec<Atom>,
}

impl InterventionSpec {
    pub fn new(atoms: Vec<Atom>) -> Self {
        Self { atoms }
    }

    pub fn is_empty(&self) -> bool {
        self.atoms.is_empty()
    }

    /// Set `channels` to `value` at the activation cell of `square`.
    pub fn set_cells(tap: &str, channels: &[usize], square: Coord, value: f32) -> Self {
        let cell = grid_to_activation_cell(square);
        Self::new(
            channels
                .iter()
                .map(|&channel| Atom::SetValue { tap: tap.into(), channel, cell, value })
                .collect(),
        )
    }

    pub fn add(delta: &ActivationDelta, coeff: f32) -> Self {
        Self::new(vec![Atom::AddDelta { tap: delta.tap.clone(), delta: delta.delta.clone(), coeff }])
    }

    /// Concatenation: `a`'s atoms, then `b`'s.
    pub fn compose(a: &InterventionSpec, b: &InterventionSpec) -> InterventionSpec {
        InterventionSpec { atoms: a.atoms.iter().chain(&b.atoms).cloned().collect() }
    }

    pub fn validate(&self, net: &PolicyNetwork) -> Result<(), NetError> {
        for atom in &self.atoms {
            let dims = net.tap_shape(atom.tap())?;
            let (c, h, w) = match *dims {
                [c, h, w] => (c, h, w),
                _ => return Err(NetError::Shape(format!("tap `{}` is not C×H×W", atom.tap()))),
            };
            match atom {
                Atom::SetValue { channel, cell, value, .. } => {
                    if *channel >= c || cell.0 >= h || cell.1 >= w {
                        return Err(NetError::OutOfRange(format!(
                            "channel {channel}, cell {cell:?} outside {c}×{h}×{w}"
                        )));
                    }
                    if !value.is_finite() {
                        return Err(NetError::OutOfRange("set value is not finite".into()));
                    }
                }
                Atom::AddDelta { delta, coeff, .. } => {
                    if delta.dims() != dims {
                        return Err(NetError::Shape(format!("delta {:?} at tap {dims:?}", delta.dims())));
                    }
                    if !coeff.is_finite() || !delta.is_finite() {
                        return Err(NetError::OutOfRange("delta or coefficient is not finite".into()));
                    }
                }
                Atom::ResampleChannels { channels, donor, .. } => {
                    if donor.dims() != dims {
                        return Err(NetError::Shape(format!("donor {:?} at tap {dims:?}", donor.dims())));
                    }
                    if let Some(&bad) = channels.iter().find(|&&ch| ch >= c) {
                        return Err(NetError::OutOfRange(format!("channel {bad} outside 0..{c}")));
                    }
                }
            }
        }
        Ok(())
    }

    /// Apply every atom aimed at `tap`, in order.
    ///
    /// Consecutive `AddDelta` atoms are summed as one update. Identical
    /// deltas have their coefficients merged first, and the remaining terms
    /// are added in a canonical order. So `+α` followed by `−α` is exactly the
    /// identity, and reordering additions never changes the result.
    pub fn apply_at(&self, tap: &str, x: &mut Tensor) {
        let atoms: Vec<&Atom> = self.atoms.iter().filter(|a| a.tap() == tap).collect();
        let mut i = 0;
        while i < atoms.len() {
            match atoms[i] {
                Atom::SetValue { channel, cell, value, .. } => {
                    x.set3(*channel, cell.0, cell.1, *value);
                    i += 1;
                }
                Atom::ResampleChannels { channels, donor, .. } => {
                    for &ch in channels {
                        let plane = x.dims()[1] * x.dims()[2];
                        x.data_mut()[ch * plane..(ch + 1) * plane].copy_from_slice(donor.channel(ch));
                    }
                    i += 1;
                }
                Atom::AddDelta { .. } => {
                    let mut terms: Vec<(&Tensor, f64)> = Vec::new();
                    while let Some(Atom::AddDelta { delta, coeff, .. }) = atoms.get(i) {
                        match terms.iter_mut().find(|(d, _)| d.data() == delta.data()) {
                            Some(term) => term.1 += *coeff as f64,
                            None => terms.push((delta, *coeff as f64)),
                        }
                        i += 1;
                    }
                    terms.sort_by(|a, b| canonical_order(a.0, b.0).then(a.1.total_cmp(&b.1)));
                    for (j, v) in x.data_mut().iter_mut().enumerate() {
                        let shift: f64 = terms.iter().map(|(d, c)| c * d.data()[j] as f64).sum();
                        *v = (*v as f64 + shift) as f32;
                    }
                }
            }
        }
    }
}

fn canonical_order(a: &Tensor, b: &Tensor) -> std::cmp::Ordering {
    a.data()
        .iter()
        .zip(b.data())
        .map(|(x, y)| x.total_cmp(y))
        .find(|o| o.is_ne())
        .unwrap_or(std::cmp::Ordering::Equal)
}

/// Where a delta came from.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Provenance {
    CheeseVector { seed: u64, cheese: Coord },
    TopRightVector { seed: u64 },
    Custom,
}

/// A steering vector at one tap.
#[derive(Debug, Clone, PartialEq)]
pub struct ActivationDelta {
    pub tap: String,
    pub delta: Arc<Tensor>,
    pub provenance: Provenance,
    /// Set when the construction degenerated to a zero delta.
    pub flagged_zero: bool,
}

fn capture_at(net: &PolicyNetwork, m: &MazeState, tap: &str) -> Result<Tensor, NetError> {
    let (_, mut cap) = net.forward(&render_observation(m), &[tap])?;
    Ok(cap.remove(tap).expect("requested tap is captured"))
}

/// Tap capture of a maze, e.g. to serve as a resampling donor.
pub fn capture(net: &PolicyNetwork, m: &MazeState, tap: &str) -> Result<Tensor, NetError> {
    capture_at(net, m, tap)
}

/// Capture with cheese minus capture without, agent on its start square.
pub fn compute_cheese_vector(net: &PolicyNetwork, m: &MazeState, tap: &str) -> Result<ActivationDelta, InterventionError> {
    let cheese = m.cheese.ok_or(InterventionError::NoCheese)?;
    let at_start = m.with_agent(m.start_square());
    let with = capture_at(net, &at_start, tap)?;
    let without = capture_at(net, &at_start.with_cheese(None), tap)?;
    Ok(ActivationDelta {
        tap: tap.into(),
        delta: Arc::new(with.sub(&without)?),
        provenance: Provenance::CheeseVector { seed: m.seed, cheese },
        flagged_zero: false,
    })
}

/// Open a straight corridor from the reachable top-right square up its
/// column to the grid's top row, then right to the grid's top-right corner.
///
/// Generated mazes always have a free inner corner. The corridor therefore
/// runs through the padding, which is what moves the reachable top-right.
/// The result is flagged synthetic whenever a cell was opened.
pub fn modify_maze_top_right(m: &MazeState) -> MazeState {
    let from = m.reachable_top_right();
    let mut out = m.clone();
    let mut opened = false;
    let column = (from.row + 1..GRID).map(|row| Coord::new(from.col, row));
    let top = (from.col + 1..GRID).map(|col| Coord::new(col, GRID - 1));
    for c in column.chain(top) {
        if !out.is_free(c) {
            out.set_cell(c, crate::maze::Cell::Free);
            opened = true;
        }
    }
    if opened {
        out.synthetic = true;
    }
    out
}

/// Capture of the carved maze minus capture of the original, both without
/// cheese and with the agent on its start square. A no-op carving yields a
/// zero delta with `flagged_zero` set.
pub fn compute_top_right_vector(net: &PolicyNetwork, m: &MazeState, tap: &str) -> Result<ActivationDelta, InterventionError> {
    let base = m.with_cheese(None).with_agent(m.start_square());
    let carved = modify_maze_top_right(&base);
    let flagged_zero = carved == base;
    let delta = if flagged_zero {
        Tensor::zeros(net.tap_shape(tap)?)
    } else {
        capture_at(net, &carved, tap)?.sub(&capture_at(net, &base, tap)?)?
    };
    Ok(ActivationDelta {
        tap: tap.into(),
        delta: Arc::new(delta),
        provenance: Provenance::TopRightVector { seed: m.seed },
        flagged_zero,
    })
}

/// Forward `target` plain, then with `channels` copied from `donor`'s capture.
pub fn resample_channels(
    net: &PolicyNetwork,
    target: &MazeState,
    donor: &MazeState,
    channels: &BTreeSet<usize>,
    tap: &str,
) -> Result<(ActionDistribution, ActionDistribution), NetError> {
    let obs = render_observation(target);
    let (before, _) = net.forward(&obs, &[])?;
    let spec = InterventionSpec::new(vec![Atom::ResampleChannels {
        tap: tap.into(),
        channels: channels.clone(),
        donor: Arc::new(capture_at(net, donor, tap)?),
    }]);
    let (after, _) = net.forward_with_intervention(&obs, &spec, &[])?;
    Ok((before, after))
}

// --- JSON form -----------------------------------------------------------------

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AtomKind {
    Set,
    Add,
    Resample,
}

fn default_tap() -> String {
    DEFAULT_TAP.into()
}

/// Serialized atom. Tensors travel by reference: `delta_ref` names a stored
/// delta for `add`. For `resample`, `donor_ref` names a stored capture, or
/// `donor_maze` gives a maze to capture.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AtomDoc {
    pub kind: AtomKind,
    #[serde(default = "default_tap")]
    pub tap: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub channel: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub channels: Option<Vec<usize>>,
    /// `[y, x]` in the 16×16 activation grid.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub cell: Option<[usize; 2]>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub value: Option<f32>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub coeff: Option<f32>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub delta_ref: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub donor_ref: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub donor_maze: Option<MazeState>,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct SpecDoc {
    pub atoms: Vec<AtomDoc>,
}

impl SpecDoc {
    /// Turn references into tensors; `lookup` resolves `delta_ref`/`donor_ref`.
    pub fn resolve(
        &self,
        net: &PolicyNetwork,
        lookup: impl Fn(&str) -> Option<Arc<Tensor>>,
    ) -> Result<InterventionSpec, InterventionError> {
        let fetch = |r: &str| lookup(r).ok_or_else(|| InterventionError::UnknownRef(r.to_string()));
        let missing = |what: &str, kind: AtomKind| InterventionError::InvalidAtom(format!("{kind:?} atom needs `{what}`"));
        let mut atoms = Vec::with_capacity(self.atoms.len());
        for a in &self.atoms {
            let tap = a.tap.clone();
            atoms.push(match a.kind {
                AtomKind::Set => Atom::SetValue {
                    tap,
                    channel: a.channel.ok_or_else(|| missing("channel", a.kind))?,
                    cell: a.cell.map(|[y, x]| (y, x)).ok_or_else(|| missing("cell", a.kind))?,
                    value: a.value.ok_or_else(|| missing("value", a.kind))?,
                },
                AtomKind::Add => {
                    let r = a.delta_ref.as_deref().or(a.donor_ref.as_deref()).ok_or_else(|| missing("delta_ref", a.kind))?;
                    Atom::AddDelta { tap, delta: fetch(r)?, coeff: a.coeff.unwrap_or(1.0) }
                }
                AtomKind::Resample => {
                    let channels: BTreeSet<usize> = match (&a.channels, a.channel) {
                        (Some(cs), _) => cs.iter().copied().collect(),
                        (None, Some(c)) => BTreeSet::from([c]),
                        (None, None) => return Err(missing("channels", a.kind)),
                    };
                    let donor = match (&a.donor_ref, &a.donor_maze) {
                        (Some(r), _) => fetch(r)?,
                        (None, Some(m)) => Arc::new(capture(net, m, &tap)?),
                        (None, None) => return Err(missing("donor_ref", a.kind)),
                    };
                    Atom::ResampleChannels { tap, channels, donor }
                }
            });
        }
        let spec = InterventionSpec::new(atoms);
        spec.validate(net)?;
        Ok(spec)
    }
}
