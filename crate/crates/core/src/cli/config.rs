//! The scenario document read by every subcommand.

use std::path::{Path, PathBuf};

use rand::{Rng, SeedableRng};
use rand_pcg::Pcg64;
use serde::{Deserialize, Serialize};

use crate::damping_maps::{rotate_relation, BoundaryRelation, ExplicitMap, Resolution, RotatedMap, SelectionPolicy};
use crate::error::{Error, Result};
use crate::rate_law::RateLaw;
use crate::riemann_core::{Norm, SimpleProfile};
use crate::scalar::{split_tag, ScalarFn};

pub const SCHEMA: &str = "wavedamp/v1";

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScenarioConfig {
    pub schema: String,
    #[serde(default)]
    pub seed: u64,
    #[serde(default = "default_horizon")]
    pub horizon: usize,
    /// Comma list such as `1,2,inf`.
    #[serde(default = "default_norms")]
    pub norms: String,
    #[serde(default)]
    pub policy: SelectionPolicy,
    #[serde(default)]
    pub map: Option<MapSpec>,
    #[serde(default)]
    pub initial: Option<InitialSpec>,
    /// Extra times at which `e_p(t)` is reported.
    #[serde(default)]
    pub times: Vec<f64>,
    #[serde(default)]
    pub disturbance: Option<DisturbanceSpec>,
    #[serde(default)]
    pub rate_law: Option<String>,
    #[serde(default)]
    pub decay: DecaySpec,
    #[serde(default)]
    pub slow: Option<SlowConfig>,
    #[serde(default)]
    pub iss: IssConfig,
    #[serde(default)]
    pub two_boundary: Option<TwoBoundaryConfig>,
    #[serde(default)]
    pub hypotheses: HypothesesConfig,
}

fn default_horizon() -> usize {
    20
}

fn default_norms() -> String {
    "1,2,inf".into()
}

/// The rotated boundary map.
#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case", deny_unknown_fields)]
pub enum MapSpec {
    /// `x -> {factor x}` given directly.
    Scale { factor: f64 },
    /// Sign graph at `level` (`sqrt2` when omitted).
    Sign {
        #[serde(default)]
        level: Option<f64>,
    },
    /// Graph of a boundary function given by a scalar tag.
    FunctionGraph {
        sigma: String,
        #[serde(default = "default_bound")]
        domain_bound: f64,
    },
    SectorBand {
        lower: String,
        upper: String,
        #[serde(default = "default_bound")]
        domain_bound: f64,
    },
    /// Band whose rotated branches satisfy `|x| - reach <= |y| <= |x|`.
    SaturationBand { reach: f64 },
    /// `x -> {sgn(x) factor Q(|x|)}` for a rate-law tag.
    RateEquality {
        law: String,
        #[serde(default = "one")]
        factor: f64,
    },
}

fn default_bound() -> f64 {
    10.0
}

fn one() -> f64 {
    1.0
}

impl MapSpec {
    pub fn relation(&self) -> Result<BoundaryRelation> {
        Ok(match self {
            MapSpec::Scale { factor } => BoundaryRelation::explicit(ExplicitMap::Scale(*factor), 10.0),
            MapSpec::Sign { level } => BoundaryRelation::sign_graph(level.unwrap_or(crate::numeric::SQRT_2))?,
            MapSpec::FunctionGraph { sigma, domain_bound } => {
                BoundaryRelation::function_graph(ScalarFn::from_tag(sigma)?, *domain_bound)
            }
            MapSpec::SectorBand { lower, upper, domain_bound } => {
                BoundaryRelation::sector_band(ScalarFn::from_tag(lower)?, ScalarFn::from_tag(upper)?, *domain_bound)?
            }
            MapSpec::SaturationBand { reach } => {
                BoundaryRelation::saturation_band(reach * crate::numeric::FRAC_1_SQRT_2)?
            }
            MapSpec::RateEquality { law, factor } => {
                let law = RateLaw::from_tag(law)?;
                let bound = law.radius();
                BoundaryRelation::explicit(ExplicitMap::RateEquality { law, factor: *factor }, bound)
            }
        })
    }

    pub fn build(&self) -> Result<RotatedMap> {
        match self {
            MapSpec::Scale { factor } => Ok(RotatedMap::scale(*factor)),
            MapSpec::Sign { level } => RotatedMap::sign(level.unwrap_or(crate::numeric::SQRT_2)),
            MapSpec::SaturationBand { reach } => RotatedMap::saturation_band(*reach),
            _ => rotate_relation(&self.relation()?, Resolution::default()),
        }
    }
}

/// Where `g_0` comes from.
#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case", deny_unknown_fields)]
pub enum InitialSpec {
    /// A closed form sampled at cell midpoints of `cells` equal cells.
    Tag { tag: String, cells: usize },
    /// Uniform values in `[-amplitude, amplitude]` on `cells` cells with
    /// random interior breakpoints, drawn from the config seed.
    Random { cells: usize, amplitude: f64 },
    /// Rows `s_lo, s_hi, value`.
    Csv { path: PathBuf },
    /// One line of a profile NDJSON file written by `simulate`.
    Ndjson {
        path: PathBuf,
        #[serde(default)]
        line: usize,
    },
}

/// A line of `profiles.ndjson`.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct ProfileLine {
    pub n: usize,
    pub seed: u64,
    pub breakpoints: Vec<f64>,
    pub values: Vec<f64>,
}

/// Closed forms on `[-1, 1]`: `const:c`, `step:a:b` (a on the left half),
/// `linear:a:b` (`a + b s`), `sin:a:k` (`a sin(k pi s)`), `bump:a:lo:hi`.
pub fn profile_from_tag(tag: &str, cells: usize) -> Result<SimpleProfile> {
    let (head, a) = split_tag(tag)?;
    let bad = || Error::UnknownTag(tag.to_string());
    let need = |n: usize| if a.len() == n { Ok(()) } else { Err(bad()) };
    let cells = cells.max(1);
    let f: Box<dyn Fn(f64) -> f64> = match head {
        "const" => {
            need(1)?;
            let c = a[0];
            Box::new(move |_| c)
        }
        "step" => {
            need(2)?;
            let (l, r) = (a[0], a[1]);
            Box::new(move |s| if s <= 0.0 { l } else { r })
        }
        "linear" => {
            need(2)?;
            let (c0, c1) = (a[0], a[1]);
            Box::new(move |s| c0 + c1 * s)
        }
        "sin" => {
            need(2)?;
            let (amp, k) = (a[0], a[1]);
            Box::new(move |s| amp * (k * std::f64::consts::PI * s).sin())
        }
        "bump" => {
            need(3)?;
            let (amp, lo, hi) = (a[0], a[1], a[2]);
            Box::new(move |s| if s > lo && s <= hi { amp } else { 0.0 })
        }
        _ => return Err(bad()),
    };
    SimpleProfile::sample(-1.0, 1.0, cells, f)
}

/// A random simple profile on `[-1, 1]`.
pub fn random_profile(rng: &mut impl Rng, cells: usize, amplitude: f64) -> SimpleProfile {
    let cells = cells.max(1);
    let mut inner: Vec<f64> = (1..cells).map(|_| rng.gen_range(-1.0..1.0)).collect();
    inner.sort_by(|a, b| a.total_cmp(b));
    inner.dedup();
    let mut bps = vec![-1.0];
    bps.extend(inner.into_iter().filter(|&b| b > -1.0 && b < 1.0));
    bps.push(1.0);
    let vals = (0..bps.len() - 1).map(|_| rng.gen_range(-amplitude..=amplitude)).collect();
    SimpleProfile::new(bps, vals).expect("sorted breakpoints with finite values")
}

impl InitialSpec {
    pub fn build(&self, seed: u64) -> Result<SimpleProfile> {
        match self {
            InitialSpec::Tag { tag, cells } => profile_from_tag(tag, *cells),
            InitialSpec::Random { cells, amplitude } => {
                Ok(random_profile(&mut Pcg64::seed_from_u64(seed), *cells, *amplitude))
            }
            InitialSpec::Csv { path } => profile_from_csv(path),
            InitialSpec::Ndjson { path, line } => {
                let text = std::fs::read_to_string(path).map_err(|e| Error::Io(format!("{}: {e}", path.display())))?;
                let raw = text
                    .lines()
                    .filter(|l| !l.trim().is_empty())
                    .nth(*line)
                    .ok_or_else(|| Error::Io(format!("{}: no line {line}", path.display())))?;
                let p: ProfileLine = serde_json::from_str(raw).map_err(|e| Error::Io(e.to_string()))?;
                SimpleProfile::new(p.breakpoints, p.values)
            }
        }
    }
}

fn profile_from_csv(path: &Path) -> Result<SimpleProfile> {
    let mut rdr = csv::ReaderBuilder::new()
        .has_headers(false)
        .trim(csv::Trim::All)
        .comment(Some(b'#'))
        .from_path(path)
        .map_err(|e| Error::Io(format!("{}: {e}", path.display())))?;
    let mut bps = Vec::new();
    let mut vals = Vec::new();
    for (i, rec) in rdr.records().enumerate() {
        let rec = rec.map_err(|e| Error::Io(e.to_string()))?;
        let nums: std::result::Result<Vec<f64>, _> = rec.iter().map(str::parse::<f64>).collect();
        match nums {
            Ok(v) if v.len() == 3 => {
                if bps.is_empty() {
                    bps.push(v[0]);
                } else if *bps.last().expect("nonempty") != v[0] {
                    return Err(Error::InvalidProfile(format!("{}: row {} leaves a gap", path.display(), i + 1)));
                }
                bps.push(v[1]);
                vals.push(v[2]);
            }
            _ if i == 0 => continue,
            _ => return Err(Error::InvalidProfile(format!("{}: row {} is not three numbers", path.display(), i + 1))),
        }
    }
    SimpleProfile::new(bps, vals)
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DisturbanceSpec {
    /// `zero`, `const:d1:d2`, `bump:d1:d2:t0:t1`, `geometric:d1:d2:r`,
    /// `poly:d1:d2:k` or `table:PATH`.
    pub tag: String,
    #[serde(default = "default_cells")]
    pub cells: usize,
}

fn default_cells() -> usize {
    crate::disturbance_iss::DEFAULT_WINDOW_CELLS
}

#[derive(Clone, Debug, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DecaySpec {
    /// Starting point of the scalar iteration.
    #[serde(default)]
    pub x0: Option<f64>,
    /// `phi` tag for the sub-super-exponential construction, e.g. `ln2plus`.
    #[serde(default)]
    pub counterexample: Option<String>,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SlowConfig {
    /// `inv-poly:k[:c]`, `inv-log` or `custom-table:PATH`.
    pub phi: String,
    pub p: f64,
    pub c: f64,
    #[serde(default)]
    pub k_max: Option<usize>,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct IssConfig {
    /// Random `(profile, constant disturbance)` scenarios added to the configured one.
    #[serde(default)]
    pub random_scenarios: usize,
    #[serde(default = "default_amplitude")]
    pub amplitude: f64,
    /// Norm used for the verdicts.
    #[serde(default = "default_iss_norm")]
    pub p: String,
    /// Range limit of the minorant, for maps whose gain gap stays bounded.
    #[serde(default)]
    pub range_limit: Option<f64>,
}

impl Default for IssConfig {
    fn default() -> Self {
        Self { random_scenarios: 0, amplitude: 1.0, p: default_iss_norm(), range_limit: None }
    }
}

fn default_amplitude() -> f64 {
    1.0
}

fn default_iss_norm() -> String {
    "2".into()
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TwoBoundaryConfig {
    /// Map at the left end; the top-level `map` acts at the right end.
    pub left: MapSpec,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct HypothesesConfig {
    #[serde(default = "default_half")]
    pub samples: usize,
    #[serde(default)]
    pub extent: Option<f64>,
    #[serde(default = "one")]
    pub sector_radius: f64,
    /// Largest radius of the contraction envelope table.
    #[serde(default = "default_r_max")]
    pub r_max: f64,
}

impl Default for HypothesesConfig {
    fn default() -> Self {
        Self { samples: default_half(), extent: None, sector_radius: 1.0, r_max: default_r_max() }
    }
}

fn default_half() -> usize {
    1000
}

fn default_r_max() -> f64 {
    4.0
}

impl ScenarioConfig {
    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::Io(format!("{}: {e}", path.display())))?;
        Self::parse(&text)
    }

    pub fn parse(text: &str) -> Result<Self> {
        let cfg: Self = serde_json::from_str(text).map_err(|e| Error::Io(format!("config: {e}")))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<()> {
        if self.schema != SCHEMA {
            return Err(Error::Io(format!("config schema must be \"{SCHEMA}\", found \"{}\"", self.schema)));
        }
        self.norm_list()?;
        if self.times.iter().any(|t| !(t.is_finite() && *t >= 0.0)) {
            return Err(Error::Io("config times must be finite and nonnegative".into()));
        }
        let mut files: Vec<&Path> = Vec::new();
        if let Some(InitialSpec::Csv { path } | InitialSpec::Ndjson { path, .. }) = &self.initial {
            files.push(path);
        }
        for f in files {
            if !f.exists() {
                return Err(Error::Io(format!("referenced file {} does not exist", f.display())));
            }
        }
        Ok(())
    }

    pub fn norm_list(&self) -> Result<Vec<Norm>> {
        let v = Norm::parse_list(&self.norms)?;
        if v.is_empty() {
            return Err(Error::Io("norm list is empty".into()));
        }
        Ok(v)
    }

    pub fn map(&self) -> Result<RotatedMap> {
        self.map.as_ref().ok_or_else(|| missing("map"))?.build()
    }

    pub fn initial_profile(&self) -> Result<SimpleProfile> {
        self.initial.as_ref().ok_or_else(|| missing("initial"))?.build(self.seed)
    }
}

pub(crate) fn missing(field: &str) -> Error {
    Error::Io(format!("config field '{field}' is required for this command"))
}
