//! Problem files, run configuration and the batch driver behind the
//! `saddlesplit` binary.
//!
//! A problem file is TOML with a `kind` tag (`raw`, `vi` or `min`), a
//! `spaces` section listing blocks, `operators.primal` and `operators.dual`
//! tables keyed by block label holding catalog descriptors per slot, a
//! `linear` array of dense row-list matrices and optional `offsets`. Slots
//! left out are zero.

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};
use std::sync::Arc;

use clap::Parser;
use serde::{Deserialize, Serialize};

use crate::blockspace::{BlockVec, SpaceLayout};
use crate::error::{Error, Result};
use crate::frontends::{min_to_problem, vi_to_problem, MinSpec, ViSpec};
use crate::operators::{
    CocoerciveOp, CouplingOp, Descriptor, LinearOp, LipMonotoneOp, ResolventOp,
};
use crate::problem::ProblemSpec;
use crate::schedule::{LagPolicy, Policy, Schedule};
use crate::solver::{run, SolveReport, StepParams, StopReason, StopRule, Variant};
use crate::StateX;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Kind {
    Raw,
    Vi,
    Min,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BlockDecl {
    pub label: String,
    pub dim: usize,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Spaces {
    pub primal: Vec<BlockDecl>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub dual: Vec<BlockDecl>,
    /// The image space of a `vi` problem.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub image: Option<BlockDecl>,
}

/// Descriptors attached to one block. Which slots are legal depends on the
/// kind and on whether the block is primal or dual.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Slots {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub a: Option<Descriptor>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub c: Option<Descriptor>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub q: Option<Descriptor>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub bm: Option<Descriptor>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub bc: Option<Descriptor>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub bl: Option<Descriptor>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub dm: Option<Descriptor>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub dc: Option<Descriptor>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub dl: Option<Descriptor>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub e: Option<Descriptor>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub f: Option<Descriptor>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub phi: Option<Descriptor>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub g: Option<Descriptor>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub psi: Option<Descriptor>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub h: Option<Descriptor>,
}

impl Slots {
    fn present(&self) -> Vec<&'static str> {
        let all = [
            ("a", &self.a),
            ("c", &self.c),
            ("q", &self.q),
            ("bm", &self.bm),
            ("bc", &self.bc),
            ("bl", &self.bl),
            ("dm", &self.dm),
            ("dc", &self.dc),
            ("dl", &self.dl),
            ("e", &self.e),
            ("f", &self.f),
            ("phi", &self.phi),
            ("g", &self.g),
            ("psi", &self.psi),
            ("h", &self.h),
        ];
        all.iter()
            .filter(|(_, d)| d.is_some())
            .map(|(n, _)| *n)
            .collect()
    }
}

/// One entry `L(k, i)`. `k` may be omitted in `vi` files (the image space).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LinearEntry {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub k: Option<String>,
    pub i: String,
    #[serde(default, skip_serializing_if = "std::ops::Not::not")]
    pub identity: bool,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub matrix: Option<Vec<Vec<f64>>>,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Offsets {
    #[serde(default, skip_serializing_if = "BTreeMap::is_empty")]
    pub sstar: BTreeMap<String, Vec<f64>>,
    #[serde(default, skip_serializing_if = "BTreeMap::is_empty")]
    pub r: BTreeMap<String, Vec<f64>>,
}

/// Per-side operator tables; primal and dual labels may coincide.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Operators {
    #[serde(default)]
    pub primal: BTreeMap<String, Slots>,
    #[serde(default)]
    pub dual: BTreeMap<String, Slots>,
}

/// The file as written, before any operator is built.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ProblemFile {
    pub kind: Kind,
    pub spaces: Spaces,
    /// `R` for raw problems, `∇Θ` for minimization.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub coupling: Option<Descriptor>,
    #[serde(default)]
    pub operators: Operators,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub linear: Vec<LinearEntry>,
    #[serde(default, skip_serializing_if = "is_default")]
    pub offsets: Offsets,
}

fn is_default(o: &Offsets) -> bool {
    *o == Offsets::default()
}

#[derive(Debug, Clone)]
pub enum ParsedProblem {
    Raw(ProblemSpec),
    Vi(ViSpec),
    Min(MinSpec),
}

impl ParsedProblem {
    pub fn into_problem(self) -> Result<ProblemSpec> {
        match self {
            ParsedProblem::Raw(p) => Ok(p),
            ParsedProblem::Vi(v) => vi_to_problem(&v),
            ParsedProblem::Min(m) => min_to_problem(&m),
        }
    }
}

fn at<T>(field: &str, r: Result<T>) -> Result<T> {
    r.map_err(|e| Error::Parse(format!("{field}: {e}")))
}

fn layout(field: &str, decls: &[BlockDecl]) -> Result<Arc<SpaceLayout>> {
    if decls.is_empty() {
        return Err(Error::Parse(format!("{field}: no blocks")));
    }
    at(
        field,
        SpaceLayout::shared(decls.iter().map(|d| (d.label.clone(), d.dim))),
    )
}

/// Checks that every key of `operators.{side}` names a declared block and
/// only uses the allowed slots.
fn check_slots(
    side: &str,
    table: &BTreeMap<String, Slots>,
    l: &SpaceLayout,
    allowed: &[&str],
) -> Result<()> {
    for (label, slots) in table {
        if l.index_of(label).is_none() {
            return Err(Error::Parse(format!(
                "operators.{side}.{label}: no block with this label"
            )));
        }
        if let Some(bad) = slots.present().into_iter().find(|s| !allowed.contains(s)) {
            return Err(Error::Parse(format!(
                "operators.{side}.{label}.{bad}: slot not allowed here (expected one of {})",
                allowed.join(", ")
            )));
        }
    }
    Ok(())
}

fn slot<'a>(
    table: &'a BTreeMap<String, Slots>,
    label: &str,
    pick: impl Fn(&'a Slots) -> &'a Option<Descriptor>,
) -> Option<&'a Descriptor> {
    table.get(label).and_then(|s| pick(s).as_ref())
}

fn linear_op(e: &LinearEntry, field: &str) -> Result<LinearOp> {
    match (&e.matrix, e.identity) {
        (Some(m), false) => at(field, LinearOp::from_rows(m)),
        (None, true) => Err(Error::Parse(format!(
            "{field}: identity needs a dimension; use a matrix"
        ))),
        _ => Err(Error::Parse(format!(
            "{field}: give exactly one of `matrix` or `identity`"
        ))),
    }
}

fn linear_map(
    file: &ProblemFile,
    h: &Arc<SpaceLayout>,
    g: &Arc<SpaceLayout>,
) -> Result<BTreeMap<(usize, usize), LinearOp>> {
    let mut out = BTreeMap::new();
    for (n, e) in file.linear.iter().enumerate() {
        let k_label = e.k.as_deref().unwrap_or("");
        let field = format!("linear[{n}] (k = {k_label}, i = {})", e.i);
        let k = g
            .index_of(k_label)
            .ok_or_else(|| Error::Parse(format!("{field}: unknown dual block `{k_label}`")))?;
        let i = h
            .index_of(&e.i)
            .ok_or_else(|| Error::Parse(format!("{field}: unknown primal block `{}`", e.i)))?;
        let op = if e.identity && e.matrix.is_none() {
            if h.dim(i) != g.dim(k) {
                return Err(Error::Parse(format!(
                    "L({k_label},{}): identity between blocks of dimensions {} and {}",
                    e.i,
                    h.dim(i),
                    g.dim(k)
                )));
            }
            LinearOp::Identity(h.dim(i))
        } else {
            linear_op(e, &field)?
        };
        if out.insert((k, i), op).is_some() {
            return Err(Error::Parse(format!("{field}: duplicate entry")));
        }
    }
    Ok(out)
}

fn offsets(
    field: &str,
    map: &BTreeMap<String, Vec<f64>>,
    l: &Arc<SpaceLayout>,
) -> Result<BlockVec> {
    let mut v = BlockVec::zeros(l);
    for (label, vals) in map {
        let b = l.index_of(label).ok_or_else(|| {
            Error::Parse(format!("offsets.{field}.{label}: no block with this label"))
        })?;
        if vals.len() != l.dim(b) {
            return Err(Error::Parse(format!(
                "offsets.{field}.{label}: expected {} entries, got {}",
                l.dim(b),
                vals.len()
            )));
        }
        v.block_mut(b).copy_from_slice(vals);
    }
    Ok(v)
}

fn build_raw(file: &ProblemFile) -> Result<ProblemSpec> {
    let h = layout("spaces.primal", &file.spaces.primal)?;
    let g = layout("spaces.dual", &file.spaces.dual)?;
    let (pt, dt) = (&file.operators.primal, &file.operators.dual);
    check_slots("primal", pt, &h, &["a", "c", "q"])?;
    check_slots("dual", dt, &g, &["bm", "bc", "bl", "dm", "dc", "dl"])?;
    let mut spec = ProblemSpec::zeros(&h, &g)?;
    for i in 0..h.len() {
        let lab = h.label(i);
        let f = |s: &str| format!("operators.primal.{lab}.{s}");
        if let Some(d) = slot(pt, lab, |s| &s.a) {
            spec.a[i] = at(&f("a"), ResolventOp::build(d, h.dim(i)))?;
        }
        if let Some(d) = slot(pt, lab, |s| &s.c) {
            spec.c[i] = at(&f("c"), CocoerciveOp::build(d, h.dim(i)))?;
        }
        if let Some(d) = slot(pt, lab, |s| &s.q) {
            spec.q[i] = at(&f("q"), LipMonotoneOp::build(d, h.dim(i)))?;
        }
    }
    for k in 0..g.len() {
        let lab = g.label(k);
        let dim = g.dim(k);
        let f = |s: &str| format!("operators.dual.{lab}.{s}");
        if let Some(d) = slot(dt, lab, |s| &s.bm) {
            spec.bm[k] = at(&f("bm"), ResolventOp::build(d, dim))?;
        }
        if let Some(d) = slot(dt, lab, |s| &s.bc) {
            spec.bc[k] = at(&f("bc"), CocoerciveOp::build(d, dim))?;
        }
        if let Some(d) = slot(dt, lab, |s| &s.bl) {
            spec.bl[k] = at(&f("bl"), LipMonotoneOp::build(d, dim))?;
        }
        if let Some(d) = slot(dt, lab, |s| &s.dm) {
            spec.dm[k] = at(&f("dm"), ResolventOp::build(d, dim))?;
        }
        if let Some(d) = slot(dt, lab, |s| &s.dc) {
            spec.dc[k] = at(&f("dc"), CocoerciveOp::build(d, dim))?;
        }
        if let Some(d) = slot(dt, lab, |s| &s.dl) {
            spec.dl[k] = at(&f("dl"), LipMonotoneOp::build(d, dim))?;
        }
    }
    if let Some(d) = &file.coupling {
        spec.coupling = at("coupling", CouplingOp::build(d, &h))?;
    }
    spec.l = linear_map(file, &h, &g)?;
    spec.sstar = offsets("sstar", &file.offsets.sstar, &h)?;
    spec.r = offsets("r", &file.offsets.r, &g)?;
    spec.validate().map_err(Error::Invalid)?;
    Ok(spec)
}

fn required(d: Option<&Descriptor>, field: String) -> Result<&Descriptor> {
    d.ok_or_else(|| Error::Parse(format!("{field}: missing required descriptor")))
}

fn build_vi(file: &ProblemFile) -> Result<ViSpec> {
    let h = layout("spaces.primal", &file.spaces.primal)?;
    let img = file
        .spaces
        .image
        .as_ref()
        .ok_or_else(|| Error::Parse("spaces.image: missing required field".into()))?;
    let g = layout("spaces.image", std::slice::from_ref(img))?;
    let (pt, dt) = (&file.operators.primal, &file.operators.dual);
    check_slots("primal", pt, &h, &["e", "f"])?;
    check_slots("dual", dt, &g, &["bm", "bc", "bl"])?;
    if file.coupling.is_some() || file.offsets != Offsets::default() {
        return Err(Error::Parse(
            "vi problems take no `coupling` or `offsets`".into(),
        ));
    }
    let mut e = Vec::new();
    let mut f = Vec::new();
    for i in 0..h.len() {
        let lab = h.label(i);
        e.push(required(slot(pt, lab, |s| &s.e), format!("operators.primal.{lab}.e"))?.clone());
        f.push(required(slot(pt, lab, |s| &s.f), format!("operators.primal.{lab}.f"))?.clone());
    }
    let mut l: Vec<Option<LinearOp>> = vec![None; h.len()];
    for (n, entry) in file.linear.iter().enumerate() {
        let field = format!("linear[{n}] (i = {})", entry.i);
        if entry.k.as_deref().is_some_and(|k| k != img.label) {
            return Err(Error::Parse(format!(
                "{field}: vi maps go into `{}`",
                img.label
            )));
        }
        let i = h
            .index_of(&entry.i)
            .ok_or_else(|| Error::Parse(format!("{field}: unknown primal block `{}`", entry.i)))?;
        let op = if entry.identity && entry.matrix.is_none() {
            LinearOp::Identity(h.dim(i))
        } else {
            linear_op(entry, &field)?
        };
        if l[i].replace(op).is_some() {
            return Err(Error::Parse(format!("{field}: duplicate entry")));
        }
    }
    let l = l
        .into_iter()
        .enumerate()
        .map(|(i, op)| {
            op.ok_or_else(|| Error::Parse(format!("linear: missing map for `{}`", h.label(i))))
        })
        .collect::<Result<Vec<_>>>()?;
    let zero = Descriptor::zero();
    let pick = |p: fn(&Slots) -> &Option<Descriptor>| {
        slot(dt, &img.label, p).cloned().unwrap_or(zero.clone())
    };
    let vi = ViSpec {
        primal: h,
        image_label: img.label.clone(),
        image_dim: img.dim,
        e,
        f,
        l,
        bm: pick(|s| &s.bm),
        bc: pick(|s| &s.bc),
        bl: pick(|s| &s.bl),
    };
    vi_to_problem(&vi)?;
    Ok(vi)
}

fn build_min(file: &ProblemFile) -> Result<MinSpec> {
    let h = layout("spaces.primal", &file.spaces.primal)?;
    let g = layout("spaces.dual", &file.spaces.dual)?;
    let (pt, dt) = (&file.operators.primal, &file.operators.dual);
    check_slots("primal", pt, &h, &["f", "phi"])?;
    check_slots("dual", dt, &g, &["g", "psi", "h"])?;
    if file.offsets != Offsets::default() {
        return Err(Error::Parse("min problems take no `offsets`".into()));
    }
    let zero = Descriptor::zero();
    let get = |t, lab: &str, p: fn(&Slots) -> &Option<Descriptor>| {
        slot(t, lab, p).cloned().unwrap_or(zero.clone())
    };
    let m = MinSpec {
        primal: Arc::clone(&h),
        dual: Arc::clone(&g),
        f: h.labels().map(|l| get(pt, l, |s| &s.f)).collect(),
        phi: h.labels().map(|l| get(pt, l, |s| &s.phi)).collect(),
        theta: file.coupling.clone().unwrap_or(zero.clone()),
        g: g.labels().map(|l| get(dt, l, |s| &s.g)).collect(),
        psi: g.labels().map(|l| get(dt, l, |s| &s.psi)).collect(),
        h: g.labels().map(|l| get(dt, l, |s| &s.h)).collect(),
        l: linear_map(file, &h, &g)?,
    };
    let spec = min_to_problem(&m)?;
    spec.validate().map_err(Error::Invalid)?;
    Ok(m)
}

/// Parses and validates a problem file.
pub fn parse_problem_file(text: &str) -> Result<ParsedProblem> {
    let file: ProblemFile = toml::from_str(text).map_err(|e| Error::Parse(e.to_string()))?;
    if file.operators.primal.is_empty() && file.operators.dual.is_empty() {
        return Err(Error::Parse("operators: no blocks".into()));
    }
    Ok(match file.kind {
        Kind::Raw => ParsedProblem::Raw(build_raw(&file)?),
        Kind::Vi => ParsedProblem::Vi(build_vi(&file)?),
        Kind::Min => ParsedProblem::Min(build_min(&file)?),
    })
}

/// Reads a file and returns the problem ready for the solver.
pub fn load_problem(path: &Path) -> Result<ProblemSpec> {
    parse_problem_file(&fs::read_to_string(path)?)?.into_problem()
}

fn decls(l: &SpaceLayout) -> Vec<BlockDecl> {
    (0..l.len())
        .map(|b| BlockDecl {
            label: l.label(b).to_string(),
            dim: l.dim(b),
        })
        .collect()
}

fn keep(d: &Descriptor) -> Option<Descriptor> {
    (*d != Descriptor::zero()).then(|| d.clone())
}

fn linear_entries(
    l: &BTreeMap<(usize, usize), LinearOp>,
    h: &SpaceLayout,
    g: &SpaceLayout,
) -> Vec<LinearEntry> {
    l.iter()
        .map(|(&(k, i), op)| LinearEntry {
            k: Some(g.label(k).to_string()),
            i: h.label(i).to_string(),
            identity: matches!(op, LinearOp::Identity(_)),
            matrix: match op {
                LinearOp::Identity(_) => None,
                LinearOp::Dense(_) => Some(op.to_rows()),
            },
        })
        .collect()
}

fn offset_map(v: &BlockVec) -> BTreeMap<String, Vec<f64>> {
    let l = v.layout();
    (0..l.len())
        .filter(|&b| v.block(b).iter().any(|x| *x != 0.0))
        .map(|b| (l.label(b).to_string(), v.block(b).to_vec()))
        .collect()
}

/// The raw file describing `spec`; parsing it gives back the same operators.
pub fn problem_to_file(spec: &ProblemSpec) -> ProblemFile {
    let mut operators = Operators::default();
    for i in 0..spec.n_primal() {
        let s = Slots {
            a: keep(spec.a[i].descriptor()),
            c: keep(spec.c[i].descriptor()),
            q: keep(spec.q[i].descriptor()),
            ..Slots::default()
        };
        operators.primal.insert(spec.h.label(i).to_string(), s);
    }
    for k in 0..spec.n_dual() {
        let s = Slots {
            bm: keep(spec.bm[k].descriptor()),
            bc: keep(spec.bc[k].descriptor()),
            bl: keep(spec.bl[k].descriptor()),
            dm: keep(spec.dm[k].descriptor()),
            dc: keep(spec.dc[k].descriptor()),
            dl: keep(spec.dl[k].descriptor()),
            ..Slots::default()
        };
        operators.dual.insert(spec.g.label(k).to_string(), s);
    }
    ProblemFile {
        kind: Kind::Raw,
        spaces: Spaces {
            primal: decls(&spec.h),
            dual: decls(&spec.g),
            image: None,
        },
        coupling: keep(spec.coupling.descriptor()),
        operators,
        linear: linear_entries(&spec.l, &spec.h, &spec.g),
        offsets: Offsets {
            sstar: offset_map(&spec.sstar),
            r: offset_map(&spec.r),
        },
    }
}

pub fn problem_to_toml(spec: &ProblemSpec) -> Result<String> {
    toml::to_string(&problem_to_file(spec)).map_err(|e| Error::Parse(e.to_string()))
}

/// Command-line options of the batch driver.
#[derive(Debug, Clone, Parser)]
#[command(
    name = "saddlesplit",
    version,
    about = "Asynchronous block-iterative saddle projective splitting"
)]
pub struct RunConfig {
    /// Problem file (TOML).
    #[arg(long)]
    pub problem: PathBuf,
    /// weak or strong.
    #[arg(long, default_value = "weak")]
    pub variant: Variant,
    /// full, round_robin or random_covering.
    #[arg(long, default_value = "full")]
    pub policy: Policy,
    /// Every block is activated at least once in any P + 1 consecutive iterations.
    #[arg(long = "P", default_value_t = 0)]
    pub p: usize,
    /// Largest lag of a block input.
    #[arg(long = "T", default_value_t = 0)]
    pub t: usize,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// zero, fixed (lag T) or random; defaults to random when T > 0.
    #[arg(long)]
    pub lag_policy: Option<LagPolicy>,
    #[arg(long)]
    pub sigma: Option<f64>,
    #[arg(long)]
    pub lambda: Option<f64>,
    /// Multiplies the default lower bound eps on step sizes.
    #[arg(long)]
    pub eps_scale: Option<f64>,
    #[arg(long, default_value_t = 1e-8)]
    pub tol: f64,
    #[arg(long, default_value_t = 100_000)]
    pub max_iter: usize,
    /// Trace CSV output.
    #[arg(long)]
    pub trace: Option<PathBuf>,
    /// Solution file output (TOML).
    #[arg(long)]
    pub out: Option<PathBuf>,
    #[arg(long, default_value_t = 1)]
    pub record_every: usize,
}

impl RunConfig {
    pub fn schedule(&self, spec: &ProblemSpec) -> Result<Schedule> {
        let policy = match self.policy {
            Policy::RandomCovering { .. } => Policy::RandomCovering { seed: self.seed },
            p => p,
        };
        let lag = match self.lag_policy {
            None if self.t > 0 => LagPolicy::Random { seed: self.seed },
            None => LagPolicy::Zero,
            Some(LagPolicy::Fixed(_)) => LagPolicy::Fixed(self.t),
            Some(LagPolicy::Random { .. }) => LagPolicy::Random { seed: self.seed },
            Some(LagPolicy::Zero) => LagPolicy::Zero,
        };
        Schedule::new(spec.n_primal(), spec.n_dual(), self.p, self.t, policy, lag)
    }

    pub fn params(&self, spec: &ProblemSpec) -> Result<StepParams> {
        let mut p = StepParams::build(spec, self.sigma, self.lambda)?;
        if let Some(s) = self.eps_scale {
            if !(s > 0.0 && s <= 1.0) {
                return Err(Error::InvalidParameter(format!(
                    "eps_scale must lie in (0, 1], got {s}"
                )));
            }
            p.eps *= s;
            p.check(spec)?;
        }
        Ok(p)
    }

    pub fn stop_rule(&self) -> Result<StopRule> {
        if !(self.tol > 0.0) || self.max_iter == 0 || self.record_every == 0 {
            return Err(Error::InvalidParameter(
                "tol must be positive; max_iter and record_every at least 1".into(),
            ));
        }
        Ok(StopRule {
            tol: self.tol,
            max_iter: self.max_iter,
            record_every: self.record_every,
            ..StopRule::default()
        })
    }

    /// Loads the problem and runs the solver from the zero state.
    pub fn solve(&self) -> Result<(ProblemSpec, SolveReport)> {
        let spec = load_problem(&self.problem)?;
        let report = run(
            &spec,
            self.schedule(&spec)?,
            self.params(&spec)?,
            StateX::zeros(&spec.h, &spec.g),
            self.variant,
            &self.stop_rule()?,
        )?;
        Ok((spec, report))
    }
}

/// Final iterate per block plus summary figures.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SolutionFile {
    pub stop: String,
    pub iterations: usize,
    pub kt_residual: f64,
    pub saddle_residual: f64,
    pub x: BTreeMap<String, Vec<f64>>,
    pub y: BTreeMap<String, Vec<f64>>,
    pub z: BTreeMap<String, Vec<f64>>,
    pub vstar: BTreeMap<String, Vec<f64>>,
}

fn per_block(v: &BlockVec) -> BTreeMap<String, Vec<f64>> {
    let l = v.layout();
    (0..l.len())
        .map(|b| (l.label(b).to_string(), v.block(b).to_vec()))
        .collect()
}

impl SolutionFile {
    pub fn from_report(r: &SolveReport) -> Self {
        Self {
            stop: r.stop.to_string(),
            iterations: r.iterations,
            kt_residual: r.kt_residual,
            saddle_residual: r.saddle_residual,
            x: per_block(&r.state.x),
            y: per_block(&r.state.y),
            z: per_block(&r.state.z),
            vstar: per_block(&r.state.vstar),
        }
    }

    pub fn to_toml(&self) -> Result<String> {
        toml::to_string(self).map_err(|e| Error::Parse(e.to_string()))
    }
}

/// Runs the configuration and writes the requested outputs. Exit status:
/// 0 when the tolerance is reached, 2 at the iteration cap, 1 on any error.
pub fn run_cli(config: &RunConfig) -> i32 {
    match run_and_write(config) {
        Ok(StopReason::Converged) => 0,
        Ok(StopReason::IterationCap) => 2,
        Err(e) => {
            eprintln!("error: {e}");
            1
        }
    }
}

fn run_and_write(config: &RunConfig) -> Result<StopReason> {
    let (_, report) = config.solve()?;
    if let Some(path) = &config.trace {
        fs::write(path, report.trace_csv())?;
    }
    if let Some(path) = &config.out {
        fs::write(path, SolutionFile::from_report(&report).to_toml()?)?;
    }
    eprintln!(
        "{} after {} iterations: kt residual {:.3e}, saddle residual {:.3e}",
        report.stop, report.iterations, report.kt_residual, report.saddle_residual
    );
    Ok(report.stop)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fixtures;

    #[test]
    fn dp1_round_trips_through_text() {
        let spec = fixtures::dp1([2.0, 0.6]);
        let text = problem_to_toml(&spec).unwrap();
        let back = parse_problem_file(&text).unwrap().into_problem().unwrap();
        assert_eq!(problem_to_file(&back), problem_to_file(&spec));
        assert_eq!(back.alpha_min(), 1.0);
    }

    #[test]
    fn every_fixture_round_trips() {
        for spec in [
            fixtures::no_kt_point(),
            fixtures::vi_parallelogram(),
            fixtures::lasso(),
            fixtures::inf_conv(),
            fixtures::coupled_theta(),
        ] {
            let text = problem_to_toml(&spec).unwrap();
            let back = parse_problem_file(&text).unwrap().into_problem().unwrap();
            assert_eq!(problem_to_file(&back), problem_to_file(&spec), "{text}");
            assert_eq!(back.alpha_min(), spec.alpha_min());
            assert_eq!(back.coupling.chi(), spec.coupling.chi());
        }
    }

    const SMALL: &str = r#"
kind = "raw"
[spaces]
primal = [{ label = "x1", dim = 2 }]
dual = [{ label = "k1", dim = 2 }]
[operators.primal.x1]
a = { type = "normal_cone_box", lo = [0.0, 0.0], hi = [1.0, 1.0] }
[operators.dual.k1]
dm = { type = "zero_inverse" }
[[linear]]
k = "k1"
i = "x1"
matrix = [[1.0, 0.0]]
"#;

    #[test]
    fn wrong_row_count_names_the_entry() {
        let err = parse_problem_file(SMALL).unwrap_err().to_string();
        assert!(err.contains("L(k1,x1)"), "{err}");
    }

    #[test]
    fn empty_operators_section_has_no_blocks() {
        let text = "kind = \"raw\"\n[spaces]\nprimal = [{ label = \"x\", dim = 1 }]\ndual = [{ label = \"k\", dim = 1 }]\n[operators]\n";
        let err = parse_problem_file(text).unwrap_err().to_string();
        assert!(err.contains("no blocks"), "{err}");
    }

    #[test]
    fn unknown_descriptor_is_reported_with_position() {
        let text = SMALL.replace("normal_cone_box", "normal_cone_ball");
        let err = parse_problem_file(&text).unwrap_err().to_string();
        assert!(
            err.contains("normal_cone_ball") && err.contains("line"),
            "{err}"
        );
    }

    #[test]
    fn misplaced_slot_is_rejected() {
        let text = SMALL.replace("dm = {", "a = {");
        let err = parse_problem_file(&text).unwrap_err().to_string();
        assert!(err.contains("operators.dual.k1.a"), "{err}");
    }

    #[test]
    fn cli_flags_parse() {
        let c = RunConfig::try_parse_from([
            "saddlesplit",
            "--problem",
            "p.toml",
            "--variant",
            "strong",
            "--policy",
            "random_covering",
            "--P",
            "2",
            "--T",
            "3",
            "--seed",
            "9",
            "--lag-policy",
            "fixed",
        ])
        .unwrap();
        assert_eq!(c.variant, Variant::Strong);
        let spec = fixtures::dp1([2.0, 0.6]);
        let s = c.schedule(&spec).unwrap();
        assert_eq!(s.policy(), Policy::RandomCovering { seed: 9 });
        assert_eq!(s.lag_policy(), LagPolicy::Fixed(3));
        assert!(RunConfig::try_parse_from([
            "saddlesplit",
            "--problem",
            "p",
            "--variant",
            "medium"
        ])
        .is_err());
    }
}
