//! Block activation and bounded lags.
//!
//! A [`Schedule`] decides which primal blocks `I_n` and dual blocks `K_n`
//! are processed at iteration `n`, and how stale the state each of them reads
//! may be. Every window `[n, n + P]` activates every block, iteration 0
//! activates all of them, and lags stay within `[max(0, n − T), n]`.
//! Asynchrony is replayed deterministically through a [`HistoryBuffer`].

use std::collections::VecDeque;
use std::fmt;
use std::str::FromStr;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::blockspace::StateX;
use crate::error::{Error, Result};

/// How blocks are activated.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Policy {
    /// Every block at every iteration.
    Full,
    /// Blocks split into `min(P + 1, #blocks)` contiguous groups visited in turn.
    RoundRobin,
    /// Each block with probability 1/2, plus any block about to exceed the window.
    RandomCovering { seed: u64 },
}

/// How far behind the current iteration a block's input may be.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum LagPolicy {
    Zero,
    Fixed(usize),
    Random { seed: u64 },
}

impl FromStr for Policy {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "full" => Ok(Policy::Full),
            "round_robin" => Ok(Policy::RoundRobin),
            "random_covering" => Ok(Policy::RandomCovering { seed: 0 }),
            other => Err(Error::Parse(format!("unknown schedule policy `{other}`"))),
        }
    }
}

impl fmt::Display for Policy {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Policy::Full => write!(f, "full"),
            Policy::RoundRobin => write!(f, "round_robin"),
            Policy::RandomCovering { .. } => write!(f, "random_covering"),
        }
    }
}

impl FromStr for LagPolicy {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "zero" => Ok(LagPolicy::Zero),
            "fixed" => Ok(LagPolicy::Fixed(0)),
            "random" => Ok(LagPolicy::Random { seed: 0 }),
            other => Err(Error::Parse(format!("unknown lag policy `{other}`"))),
        }
    }
}

impl fmt::Display for LagPolicy {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            LagPolicy::Zero => write!(f, "zero"),
            LagPolicy::Fixed(_) => write!(f, "fixed"),
            LagPolicy::Random { .. } => write!(f, "random"),
        }
    }
}

/// Which block a lag refers to.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Side {
    Primal(usize),
    Dual(usize),
}

/// Sequential generator of covering random subsets for one side.
#[derive(Debug, Clone)]
struct Covering {
    rng: ChaCha8Rng,
    last_seen: Vec<usize>,
    sets: Vec<Vec<usize>>,
}

impl Covering {
    fn new(seed: u64, stream: u64, m: usize) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        rng.set_stream(stream);
        Self {
            rng,
            last_seen: vec![0; m],
            sets: vec![(0..m).collect()],
        }
    }

    fn extend_to(&mut self, n: usize, p: usize) {
        let m = self.last_seen.len();
        while self.sets.len() <= n {
            let j = self.sets.len();
            let mut set: Vec<usize> = (0..m)
                .filter(|&b| {
                    let coin = self.rng.random_bool(0.5);
                    coin || j - self.last_seen[b] > p
                })
                .collect();
            if set.is_empty() {
                set.push(self.rng.random_range(0..m));
            }
            for &b in &set {
                self.last_seen[b] = j;
            }
            self.sets.push(set);
        }
    }
}

/// Activation sets and lags for a problem with `n_primal` and `n_dual` blocks.
#[derive(Debug, Clone)]
pub struct Schedule {
    n_primal: usize,
    n_dual: usize,
    p: usize,
    t: usize,
    policy: Policy,
    lag_policy: LagPolicy,
    covering: Option<(Covering, Covering)>,
}

impl Schedule {
    pub fn new(
        n_primal: usize,
        n_dual: usize,
        p: usize,
        t: usize,
        policy: Policy,
        lag_policy: LagPolicy,
    ) -> Result<Self> {
        if n_primal == 0 || n_dual == 0 {
            return Err(Error::InvalidParameter(
                "schedule needs at least one block per side".into(),
            ));
        }
        if let LagPolicy::Fixed(d) = lag_policy {
            if d > t {
                return Err(Error::InvalidParameter(format!(
                    "fixed lag {d} exceeds the bound T = {t}"
                )));
            }
        }
        let covering = match policy {
            Policy::RandomCovering { seed } => Some((
                Covering::new(seed, 0, n_primal),
                Covering::new(seed, 1, n_dual),
            )),
            _ => None,
        };
        Ok(Self {
            n_primal,
            n_dual,
            p,
            t,
            policy,
            lag_policy,
            covering,
        })
    }

    /// Everything active, no lag.
    pub fn synchronous(n_primal: usize, n_dual: usize) -> Result<Self> {
        Self::new(n_primal, n_dual, 0, 0, Policy::Full, LagPolicy::Zero)
    }

    pub fn window(&self) -> usize {
        self.p
    }

    pub fn max_lag(&self) -> usize {
        self.t
    }

    pub fn policy(&self) -> Policy {
        self.policy
    }

    pub fn lag_policy(&self) -> LagPolicy {
        self.lag_policy
    }

    fn round_robin(&self, m: usize, n: usize) -> Vec<usize> {
        let groups = (self.p + 1).min(m);
        if n == 0 || groups == 1 {
            return (0..m).collect();
        }
        let g = (n - 1) % groups;
        (g * m / groups..(g + 1) * m / groups).collect()
    }

    /// Active primal and dual blocks at iteration `n`, in increasing order.
    pub fn blocks_at(&mut self, n: usize) -> (Vec<usize>, Vec<usize>) {
        match self.policy {
            Policy::Full => ((0..self.n_primal).collect(), (0..self.n_dual).collect()),
            Policy::RoundRobin => (
                self.round_robin(self.n_primal, n),
                self.round_robin(self.n_dual, n),
            ),
            Policy::RandomCovering { .. } => {
                let p = self.p;
                let (ci, ck) = self.covering.as_mut().expect("covering state");
                ci.extend_to(n, p);
                ck.extend_to(n, p);
                (ci.sets[n].clone(), ck.sets[n].clone())
            }
        }
    }

    /// Iteration whose state block `which` reads at iteration `n`.
    pub fn lag_at(&self, which: Side, n: usize) -> usize {
        let lo = n.saturating_sub(self.t);
        match self.lag_policy {
            LagPolicy::Zero => n,
            LagPolicy::Fixed(d) => n.saturating_sub(d),
            LagPolicy::Random { seed } => {
                if lo == n {
                    return n;
                }
                let stream = match which {
                    Side::Primal(i) => 2 * i as u64,
                    Side::Dual(k) => 2 * k as u64 + 1,
                };
                let mut rng = ChaCha8Rng::seed_from_u64(seed);
                rng.set_stream(stream);
                rng.set_word_pos(n as u128 * 16);
                rng.random_range(lo..=n)
            }
        }
    }

    /// Checks that iteration 0 activates every block.
    pub fn check_start(&mut self) -> Result<()> {
        let (i0, k0) = self.blocks_at(0);
        if i0.len() != self.n_primal || k0.len() != self.n_dual {
            return Err(Error::Precondition(
                "iteration 0 must activate every block".into(),
            ));
        }
        Ok(())
    }
}

/// The last `T + 1` published states, addressed by iteration number.
#[derive(Debug, Clone)]
pub struct HistoryBuffer {
    cap: usize,
    entries: VecDeque<(usize, StateX)>,
}

impl HistoryBuffer {
    pub fn new(max_lag: usize) -> Self {
        Self {
            cap: max_lag + 1,
            entries: VecDeque::with_capacity(max_lag + 1),
        }
    }

    /// Publishes the state of iteration `n`; iterations must arrive in order.
    pub fn push(&mut self, n: usize, state: StateX) -> Result<()> {
        if let Some((last, _)) = self.entries.back() {
            if n != last + 1 {
                return Err(Error::Precondition(format!(
                    "history expects iteration {}, got {n}",
                    last + 1
                )));
            }
        }
        if self.entries.len() == self.cap {
            self.entries.pop_front();
        }
        self.entries.push_back((n, state));
        Ok(())
    }

    pub fn get(&self, m: usize) -> Option<&StateX> {
        let (first, _) = self.entries.front()?;
        self.entries.get(m.checked_sub(*first)?).map(|(_, s)| s)
    }

    pub fn latest(&self) -> Option<(usize, &StateX)> {
        self.entries.back().map(|(n, s)| (*n, s))
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }
}
