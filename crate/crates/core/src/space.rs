//! Joint-state indexing, dense distributions and datasets.
//!
//! Flat indices are mixed-radix with variable 0 least significant:
//! `index = Σ_i x_i · Π_{j<i} |X_j|`.

use std::fmt;
use std::io::{BufRead, Write};
use std::ops::Deref;

use crate::error::{Error, Result};

/// Largest number of joint states a dense representation may hold.
pub const DENSE_CAP: usize = 1 << 20;

/// Tolerance on `Σ p = 1` when constructing a [`DenseDistribution`].
pub const NORMALIZATION_TOL: f64 = 1e-12;

/// Cardinalities of `n` finite discrete variables.
#[derive(Clone, Debug, PartialEq, Eq, Hash)]
pub struct VariableSpace {
    cards: Vec<usize>,
    strides: Vec<u128>,
    total: u128,
}

impl VariableSpace {
    pub fn new(cards: Vec<usize>) -> Result<Self> {
        if cards.is_empty() {
            return Err(Error::domain(
                "a variable space needs at least one variable",
            ));
        }
        if let Some((i, &c)) = cards.iter().enumerate().find(|(_, &c)| c < 2) {
            return Err(Error::domain(format!(
                "variable {i} has cardinality {c}; every cardinality must be >= 2"
            )));
        }
        let mut strides = Vec::with_capacity(cards.len());
        let mut total: u128 = 1;
        for &c in &cards {
            strides.push(total);
            total = total.saturating_mul(c as u128);
        }
        Ok(Self {
            cards,
            strides,
            total,
        })
    }

    /// `n` binary variables.
    pub fn binary(n: usize) -> Result<Self> {
        Self::new(vec![2; n])
    }

    pub fn n(&self) -> usize {
        self.cards.len()
    }

    pub fn cardinalities(&self) -> &[usize] {
        &self.cards
    }

    pub fn card(&self, i: usize) -> usize {
        self.cards[i]
    }

    /// `Π_i |X_i|`, saturating at `u128::MAX`.
    pub fn total_states(&self) -> u128 {
        self.total
    }

    /// Number of joint states, or a capacity error past [`DENSE_CAP`].
    pub fn dense_len(&self) -> Result<usize> {
        if self.total > DENSE_CAP as u128 {
            return Err(Error::Capacity {
                what: "dense joint distribution",
                needed: self.total,
                cap: DENSE_CAP,
            });
        }
        Ok(self.total as usize)
    }

    /// Stride of variable `i` in flat indexing. Only meaningful within the cap.
    pub fn stride(&self, i: usize) -> usize {
        self.strides[i] as usize
    }

    /// Number of assignments to `X_{-i}`.
    pub fn context_len(&self, i: usize) -> Result<usize> {
        Ok(self.dense_len()? / self.cards[i])
    }

    pub fn check_state(&self, state: &[usize]) -> Result<()> {
        if state.len() != self.n() {
            return Err(Error::domain(format!(
                "state has {} components, space has {} variables",
                state.len(),
                self.n()
            )));
        }
        for (i, (&v, &c)) in state.iter().zip(&self.cards).enumerate() {
            if v >= c {
                return Err(Error::domain(format!(
                    "component {i} = {v} out of range [0, {c})"
                )));
            }
        }
        Ok(())
    }

    pub fn encode(&self, state: &[usize]) -> Result<usize> {
        self.dense_len()?;
        self.check_state(state)?;
        Ok(self.encode_unchecked(state))
    }

    pub(crate) fn encode_unchecked(&self, state: &[usize]) -> usize {
        state
            .iter()
            .zip(&self.strides)
            .map(|(&v, &s)| v * s as usize)
            .sum()
    }

    pub fn decode(&self, index: usize) -> Result<JointState> {
        let len = self.dense_len()?;
        if index >= len {
            return Err(Error::domain(format!(
                "index {index} out of range [0, {len})"
            )));
        }
        let mut out = vec![0; self.n()];
        self.decode_into(index, &mut out);
        Ok(JointState(out))
    }

    pub(crate) fn decode_into(&self, mut index: usize, out: &mut [usize]) {
        for (slot, &c) in out.iter_mut().zip(&self.cards) {
            *slot = index % c;
            index /= c;
        }
    }

    /// Index of the `X_{-i}` assignment of flat state `x`.
    #[inline]
    pub(crate) fn context_of(&self, x: usize, i: usize) -> usize {
        let stride = self.strides[i] as usize;
        let lo = x % stride;
        let hi = x / (stride * self.cards[i]);
        lo + hi * stride
    }

    /// Flat state with `X_{-i}` given by `ctx` and `X_i = v`.
    #[inline]
    pub(crate) fn state_of(&self, ctx: usize, i: usize, v: usize) -> usize {
        let stride = self.strides[i] as usize;
        let lo = ctx % stride;
        let hi = ctx / stride;
        lo + v * stride + hi * stride * self.cards[i]
    }

    /// Space over the given (sorted, distinct) variables.
    pub fn subspace(&self, vars: &[usize]) -> Result<VariableSpace> {
        VariableSpace::new(vars.iter().map(|&v| self.cards[v]).collect())
    }
}

impl fmt::Display for VariableSpace {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{:?}", self.cards)
    }
}

/// One assignment `x` to all variables.
#[derive(Clone, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct JointState(pub Vec<usize>);

impl Deref for JointState {
    type Target = [usize];
    fn deref(&self) -> &[usize] {
        &self.0
    }
}

impl From<Vec<usize>> for JointState {
    fn from(v: Vec<usize>) -> Self {
        JointState(v)
    }
}

/// A probability vector over every joint state of a space.
#[derive(Clone, Debug, PartialEq)]
pub struct DenseDistribution {
    space: VariableSpace,
    probs: Vec<f64>,
}

impl DenseDistribution {
    /// Validating constructor; no renormalization is performed.
    pub fn new(space: VariableSpace, probs: Vec<f64>) -> Result<Self> {
        let len = space.dense_len()?;
        if probs.len() != len {
            return Err(Error::domain(format!(
                "probability vector has length {}, space has {len} states",
                probs.len()
            )));
        }
        if let Some((k, &p)) = probs
            .iter()
            .enumerate()
            .find(|(_, &p)| !(p >= 0.0 && p.is_finite()))
        {
            return Err(Error::domain(format!("probability {k} is {p}")));
        }
        let total: f64 = probs.iter().sum();
        if (total - 1.0).abs() > NORMALIZATION_TOL {
            return Err(Error::domain(format!(
                "probabilities sum to {total:.17}, not 1"
            )));
        }
        Ok(Self { space, probs })
    }

    /// Normalize non-negative weights. For generators and solvers whose
    /// output is a distribution up to scale.
    pub fn from_weights(space: VariableSpace, mut weights: Vec<f64>) -> Result<Self> {
        let total: f64 = weights.iter().sum();
        if !(total > 0.0 && total.is_finite()) {
            return Err(Error::domain(format!("weights sum to {total}")));
        }
        for w in &mut weights {
            *w /= total;
        }
        Self::new(space, weights)
    }

    pub fn uniform(space: VariableSpace) -> Result<Self> {
        let len = space.dense_len()?;
        Self::new(space, vec![1.0 / len as f64; len])
    }

    pub fn point_mass(space: VariableSpace, index: usize) -> Result<Self> {
        let len = space.dense_len()?;
        if index >= len {
            return Err(Error::domain(format!("index {index} out of range")));
        }
        let mut probs = vec![0.0; len];
        probs[index] = 1.0;
        Self::new(space, probs)
    }

    pub fn space(&self) -> &VariableSpace {
        &self.space
    }

    pub fn probs(&self) -> &[f64] {
        &self.probs
    }

    pub fn prob(&self, state: &[usize]) -> Result<f64> {
        Ok(self.probs[self.space.encode(state)?])
    }

    pub fn into_probs(self) -> Vec<f64> {
        self.probs
    }

    /// Sum out every variable not in `keep`. The result's variables are the
    /// kept ones in ascending index order.
    pub fn marginal(&self, keep: &[usize]) -> Result<DenseDistribution> {
        let mut keep = keep.to_vec();
        keep.sort_unstable();
        keep.dedup();
        if keep.is_empty() {
            return Err(Error::domain("marginal needs a non-empty set of variables"));
        }
        if let Some(&v) = keep.iter().find(|&&v| v >= self.space.n()) {
            return Err(Error::domain(format!("variable {v} not in space")));
        }
        let sub = self.space.subspace(&keep)?;
        let mut out = vec![0.0; sub.dense_len()?];
        let mut state = vec![0; self.space.n()];
        for (x, &p) in self.probs.iter().enumerate() {
            if p == 0.0 {
                continue;
            }
            self.space.decode_into(x, &mut state);
            let mut idx = 0;
            let mut stride = 1;
            for &v in &keep {
                idx += state[v] * stride;
                stride *= self.space.card(v);
            }
            out[idx] += p;
        }
        DenseDistribution::new(sub, out)
    }

    /// Condition on `clamp` (variable, value pairs). Returns the conditional
    /// over the remaining variables (ascending order) and `p(x_C)`, or `None`
    /// when `p(x_C) = 0`.
    pub fn condition(&self, clamp: &[(usize, usize)]) -> Result<Option<(DenseDistribution, f64)>> {
        let n = self.space.n();
        let mut fixed: Vec<Option<usize>> = vec![None; n];
        for &(v, val) in clamp {
            if v >= n || val >= self.space.card(v) {
                return Err(Error::domain(format!("clamp {v}={val} out of range")));
            }
            if fixed[v].replace(val).is_some() {
                return Err(Error::domain(format!("variable {v} clamped twice")));
            }
        }
        let free: Vec<usize> = (0..n).filter(|&v| fixed[v].is_none()).collect();
        if free.is_empty() {
            return Err(Error::domain("conditioning on every variable"));
        }
        let sub = self.space.subspace(&free)?;
        let len = sub.dense_len()?;
        let mut out = vec![0.0; len];
        let mut full = vec![0; n];
        for (v, f) in fixed.iter().enumerate() {
            if let Some(val) = f {
                full[v] = *val;
            }
        }
        let mut substate = vec![0; free.len()];
        for (s, slot) in out.iter_mut().enumerate() {
            sub.decode_into(s, &mut substate);
            for (&v, &val) in free.iter().zip(&substate) {
                full[v] = val;
            }
            *slot = self.probs[self.space.encode_unchecked(&full)];
        }
        let mass: f64 = out.iter().sum();
        if mass == 0.0 {
            return Ok(None);
        }
        Ok(Some((DenseDistribution::from_weights(sub, out)?, mass)))
    }

    /// Total-variation distance `½ Σ |p − q|`.
    pub fn total_variation(&self, other: &DenseDistribution) -> Result<f64> {
        if self.space != other.space {
            return Err(Error::domain("distributions live on different spaces"));
        }
        Ok(0.5
            * self
                .probs
                .iter()
                .zip(&other.probs)
                .map(|(a, b)| (a - b).abs())
                .sum::<f64>())
    }

    /// CSV export: index, decoded state tuple, probability.
    pub fn write_csv<W: Write>(&self, names: &[String], out: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        let mut header = vec!["index".to_string()];
        header.extend(names.iter().cloned());
        header.push("probability".to_string());
        w.write_record(&header)?;
        let mut state = vec![0; self.space.n()];
        for (x, &p) in self.probs.iter().enumerate() {
            self.space.decode_into(x, &mut state);
            let mut rec = vec![x.to_string()];
            rec.extend(state.iter().map(|v| v.to_string()));
            rec.push(format!("{p:.17e}"));
            w.write_record(&rec)?;
        }
        w.flush()?;
        Ok(())
    }
}

/// Samples over a variable space, stored row-major.
#[derive(Clone, Debug, PartialEq)]
pub struct Dataset {
    space: VariableSpace,
    names: Vec<String>,
    values: Vec<usize>,
}

/// Default column names `X0, X1, …`.
pub fn default_names(n: usize) -> Vec<String> {
    (0..n).map(|i| format!("X{i}")).collect()
}

impl Dataset {
    pub fn new(space: VariableSpace, samples: Vec<JointState>) -> Result<Self> {
        let mut values = Vec::with_capacity(samples.len() * space.n());
        for s in &samples {
            space.check_state(s)?;
            values.extend_from_slice(s);
        }
        let names = default_names(space.n());
        Ok(Self {
            space,
            names,
            values,
        })
    }

    /// Build from flat row-major values.
    pub fn from_flat(space: VariableSpace, values: Vec<usize>) -> Result<Self> {
        let n = space.n();
        if !values.len().is_multiple_of(n) {
            return Err(Error::domain(
                "flat values not a multiple of the variable count",
            ));
        }
        for row in values.chunks(n) {
            space.check_state(row)?;
        }
        let names = default_names(n);
        Ok(Self {
            space,
            names,
            values,
        })
    }

    pub fn with_names(mut self, names: Vec<String>) -> Result<Self> {
        if names.len() != self.space.n() {
            return Err(Error::domain("one name per variable required"));
        }
        self.names = names;
        Ok(self)
    }

    pub fn space(&self) -> &VariableSpace {
        &self.space
    }

    pub fn names(&self) -> &[String] {
        &self.names
    }

    /// Sample count `N`.
    pub fn len(&self) -> usize {
        self.values.len() / self.space.n()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn sample(&self, k: usize) -> &[usize] {
        let n = self.space.n();
        &self.values[k * n..(k + 1) * n]
    }

    pub fn samples(&self) -> impl ExactSizeIterator<Item = &[usize]> + '_ {
        self.values.chunks(self.space.n())
    }

    /// First `count` samples.
    pub fn prefix(&self, count: usize) -> Dataset {
        let n = self.space.n();
        Dataset {
            space: self.space.clone(),
            names: self.names.clone(),
            values: self.values[..count.min(self.len()) * n].to_vec(),
        }
    }

    /// `p^D(x) = count(x) / N`.
    pub fn empirical_distribution(&self) -> Result<DenseDistribution> {
        if self.is_empty() {
            return Err(Error::domain("empirical distribution of an empty dataset"));
        }
        let len = self.space.dense_len()?;
        let mut counts = vec![0u64; len];
        for s in self.samples() {
            counts[self.space.encode_unchecked(s)] += 1;
        }
        let n = self.len() as f64;
        let probs = counts.into_iter().map(|c| c as f64 / n).collect();
        DenseDistribution::new(self.space.clone(), probs)
    }

    /// Read the CSV dataset format: a header of variable names, an optional
    /// `#cardinalities: a,b,...` line, then one integer row per sample.
    /// Other `#` lines are comments.
    pub fn read_csv<R: BufRead>(mut input: R) -> Result<Self> {
        let mut text = String::new();
        input.read_to_string(&mut text)?;
        let mut pinned: Option<Vec<usize>> = None;
        for line in text.lines().skip(1) {
            let t = line.trim();
            if let Some(rest) = t.strip_prefix("#cardinalities:") {
                let cards = rest
                    .split(',')
                    .map(|s| {
                        s.trim()
                            .parse::<usize>()
                            .map_err(|e| Error::Parse(format!("bad cardinality {s:?}: {e}")))
                    })
                    .collect::<Result<Vec<_>>>()?;
                pinned = Some(cards);
                break;
            }
            if !t.starts_with('#') && !t.is_empty() {
                break;
            }
        }
        let mut reader = csv::ReaderBuilder::new()
            .comment(Some(b'#'))
            .trim(csv::Trim::All)
            .from_reader(text.as_bytes());
        let names: Vec<String> = reader.headers()?.iter().map(str::to_string).collect();
        if names.is_empty() || names.iter().any(String::is_empty) {
            return Err(Error::Parse("missing or empty column names".into()));
        }
        let n = names.len();
        let mut values = Vec::new();
        for (row, rec) in reader.records().enumerate() {
            let rec = rec?;
            if rec.len() != n {
                return Err(Error::Parse(format!(
                    "row {} has {} fields, expected {n}",
                    row + 1,
                    rec.len()
                )));
            }
            for field in rec.iter() {
                let v = field.parse::<usize>().map_err(|e| {
                    Error::Parse(format!("row {}: bad value {field:?}: {e}", row + 1))
                })?;
                values.push(v);
            }
        }
        let cards = match pinned {
            Some(c) => {
                if c.len() != n {
                    return Err(Error::Parse(format!(
                        "#cardinalities lists {} values for {n} columns",
                        c.len()
                    )));
                }
                c
            }
            None => {
                let mut maxes = vec![0usize; n];
                for row in values.chunks(n) {
                    for (m, &v) in maxes.iter_mut().zip(row) {
                        *m = (*m).max(v);
                    }
                }
                // A column that never leaves 0 is still binary.
                maxes.into_iter().map(|m| (m + 1).max(2)).collect()
            }
        };
        let space = VariableSpace::new(cards).map_err(|e| Error::Parse(e.to_string()))?;
        Dataset::from_flat(space, values)
            .map_err(|e| Error::Parse(e.to_string()))?
            .with_names(names)
    }

    /// Write the CSV dataset format. `comments` become `# ...` lines after the
    /// pinned cardinalities.
    pub fn write_csv<W: Write>(&self, mut out: W, comments: &[String]) -> Result<()> {
        writeln!(out, "{}", self.names.join(","))?;
        let cards: Vec<String> = self
            .space
            .cardinalities()
            .iter()
            .map(|c| c.to_string())
            .collect();
        writeln!(out, "#cardinalities: {}", cards.join(","))?;
        for c in comments {
            writeln!(out, "# {c}")?;
        }
        let mut line = String::new();
        for s in self.samples() {
            line.clear();
            for (k, v) in s.iter().enumerate() {
                if k > 0 {
                    line.push(',');
                }
                line.push_str(&v.to_string());
            }
            writeln!(out, "{line}")?;
        }
        out.flush()?;
        Ok(())
    }
}
