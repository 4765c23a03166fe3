//! Run configuration: command-line flags layered over an optional TOML
//! file layered over defaults.

use std::path::{Path, PathBuf};

use clap::{Args, ValueEnum};
use pucci_core::domain::{ExponentPath, OperatorKind, Shape};
use pucci_core::operators::EllipticityPair;
use pucci_core::radial::{default_bracket, RadialKind, DEFAULT_EXPONENT_TOL, DEFAULT_RMAX, DEFAULT_SHOOT_TOL};
use serde::{Deserialize, Serialize};

use crate::error::CliError;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, ValueEnum, Serialize, Deserialize)]
pub enum Kind {
    #[value(name = "q+")]
    #[serde(rename = "q+")]
    QPlus,
    #[value(name = "q-")]
    #[serde(rename = "q-")]
    QMinus,
    #[value(name = "m+")]
    #[serde(rename = "m+")]
    PucciPlus,
    #[value(name = "m-")]
    #[serde(rename = "m-")]
    PucciMinus,
}

impl Kind {
    pub const ALL: [Kind; 4] = [Kind::QPlus, Kind::QMinus, Kind::PucciPlus, Kind::PucciMinus];

    pub fn label(self) -> &'static str {
        match self {
            Kind::QPlus => "q+",
            Kind::QMinus => "q-",
            Kind::PucciPlus => "m+",
            Kind::PucciMinus => "m-",
        }
    }

    /// The radial equation whose critical exponent belongs to this operator.
    pub fn radial(self, dim: usize, e: EllipticityPair) -> RadialKind {
        match self {
            Kind::QPlus => RadialKind::q_plus(dim, e),
            Kind::QMinus => RadialKind::q_minus(dim, e),
            Kind::PucciPlus => RadialKind::PucciPlus { dim, e },
            Kind::PucciMinus => RadialKind::PucciMinus { dim, e },
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize, Deserialize)]
pub enum ShapeArg {
    #[value(name = "cos2")]
    #[serde(rename = "cos2")]
    Cos2,
    #[value(name = "cos3")]
    #[serde(rename = "cos3")]
    Cos3,
    #[value(name = "bump")]
    #[serde(rename = "bump")]
    Bump,
}

impl From<ShapeArg> for Shape {
    fn from(s: ShapeArg) -> Self {
        match s {
            ShapeArg::Cos2 => Shape::Cos(2),
            ShapeArg::Cos3 => Shape::Cos(3),
            ShapeArg::Bump => Shape::Bump,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Method {
    Continuation,
    Homotopy,
}

/// Flags shared by every command. Unset flags fall back to the config file.
#[derive(Debug, Clone, Default, Args)]
pub struct Flags {
    #[arg(long)]
    pub lambda: Option<f64>,
    #[arg(long = "Lambda")]
    pub big_lambda: Option<f64>,
    #[arg(long, value_name = "N")]
    pub dim: Option<usize>,
    #[arg(long, value_enum)]
    pub kind: Option<Kind>,
    #[arg(long)]
    pub p: Option<f64>,
    #[arg(long = "p-lo")]
    pub p_lo: Option<f64>,
    #[arg(long = "p-hi")]
    pub p_hi: Option<f64>,
    #[arg(long)]
    pub tol: Option<f64>,
    #[arg(long)]
    pub rmax: Option<f64>,
    /// Comma-separated amplitudes, solved in the given order.
    #[arg(long, value_delimiter = ',', num_args = 1..)]
    pub eps: Option<Vec<f64>>,
    #[arg(long, value_enum)]
    pub shape: Option<ShapeArg>,
    #[arg(long)]
    pub nr: Option<usize>,
    #[arg(long)]
    pub ntheta: Option<usize>,
    #[arg(long)]
    pub kmax: Option<u32>,
    #[arg(long, value_name = "DIR")]
    pub out: Option<PathBuf>,
    #[arg(long, value_name = "FILE")]
    pub config: Option<PathBuf>,
    #[arg(long = "no-cache")]
    pub no_cache: bool,
}

#[derive(Debug, Clone, Default, PartialEq, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct HomotopyFile {
    pub steps: Option<usize>,
    pub max_refinements: Option<usize>,
    pub path: Option<ExponentPath>,
}

#[derive(Debug, Clone, Default, PartialEq, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TableFile {
    pub kinds: Option<Vec<Kind>>,
    pub dims: Option<Vec<usize>>,
    /// `[λ, Λ]` pairs.
    pub pairs: Option<Vec<[f64; 2]>>,
}

/// Contents of a `--config` file. Keys mirror the flags; `method`,
/// `homotopy` and `table` exist only here.
#[derive(Debug, Clone, Default, PartialEq, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FileConfig {
    pub lambda: Option<f64>,
    #[serde(rename = "Lambda")]
    pub big_lambda: Option<f64>,
    pub dim: Option<usize>,
    pub kind: Option<Kind>,
    pub p: Option<f64>,
    pub p_lo: Option<f64>,
    pub p_hi: Option<f64>,
    pub tol: Option<f64>,
    pub rmax: Option<f64>,
    pub eps: Option<Vec<f64>>,
    pub shape: Option<ShapeArg>,
    pub nr: Option<usize>,
    pub ntheta: Option<usize>,
    pub kmax: Option<u32>,
    pub out: Option<PathBuf>,
    pub no_cache: Option<bool>,
    pub method: Option<Method>,
    pub homotopy: Option<HomotopyFile>,
    pub table: Option<TableFile>,
}

impl FileConfig {
    pub fn load(path: &Path) -> Result<Self, CliError> {
        let text = std::fs::read_to_string(path).map_err(|e| CliError::Config(format!("cannot read {}: {e}", path.display())))?;
        Self::parse(&text).map_err(|e| CliError::Config(format!("{}: {e}", path.display())))
    }

    pub fn parse(text: &str) -> Result<Self, String> {
        toml::from_str(text).map_err(|e| e.to_string())
    }
}

/// Flags and file merged, before command-specific defaults.
#[derive(Debug, Clone, Default)]
pub struct Merged {
    pub flags: Flags,
    pub file: FileConfig,
}

pub const DEFAULT_OUT: &str = "results";

impl Merged {
    pub fn new(flags: Flags) -> Result<Self, CliError> {
        let file = match &flags.config {
            Some(path) => FileConfig::load(path)?,
            None => FileConfig::default(),
        };
        Ok(Self { flags, file })
    }

    pub fn out_dir(&self) -> PathBuf {
        self.flags.out.clone().or_else(|| self.file.out.clone()).unwrap_or_else(|| DEFAULT_OUT.into())
    }

    pub fn use_cache(&self) -> bool {
        !(self.flags.no_cache || self.file.no_cache.unwrap_or(false))
    }

    fn pair(&self) -> Result<EllipticityPair, CliError> {
        let l = self.flags.lambda.or(self.file.lambda).unwrap_or(1.0);
        let big = self.flags.big_lambda.or(self.file.big_lambda).unwrap_or(2.0);
        Ok(EllipticityPair::new(l, big)?)
    }

    fn dim(&self) -> Result<usize, CliError> {
        let dim = self.flags.dim.or(self.file.dim).unwrap_or(3);
        if dim < 2 {
            return Err(CliError::Config(format!("--dim must be at least 2 (got {dim})")));
        }
        Ok(dim)
    }

    fn kind(&self) -> Kind {
        self.flags.kind.or(self.file.kind).unwrap_or(Kind::QPlus)
    }

    fn p(&self) -> Result<f64, CliError> {
        let p = self.flags.p.or(self.file.p).ok_or_else(|| CliError::Config("--p is required".into()))?;
        if !(p > 1.0 && p.is_finite()) {
            return Err(CliError::Config(format!("--p must be a finite number above 1 (got {p})")));
        }
        Ok(p)
    }

    fn tol(&self, default: f64) -> Result<f64, CliError> {
        positive("--tol", self.flags.tol.or(self.file.tol).unwrap_or(default))
    }

    fn rmax(&self) -> Result<f64, CliError> {
        positive("--rmax", self.flags.rmax.or(self.file.rmax).unwrap_or(DEFAULT_RMAX))
    }

    pub fn exponent(&self) -> Result<ExponentParams, CliError> {
        let (e, dim, kind) = (self.pair()?, self.dim()?, self.kind());
        let (lo0, hi0) = default_bracket(&kind.radial(dim, e));
        let p_lo = self.flags.p_lo.or(self.file.p_lo).unwrap_or(lo0);
        let p_hi = self.flags.p_hi.or(self.file.p_hi).unwrap_or(hi0);
        if !(p_lo > 1.0 && p_hi > p_lo && p_hi.is_finite()) {
            return Err(CliError::Config(format!("bracket must satisfy 1 < p-lo < p-hi (got [{p_lo}, {p_hi}])")));
        }
        Ok(ExponentParams {
            kind,
            lambda: e.lambda(),
            big_lambda: e.Lambda(),
            dim,
            p_lo,
            p_hi,
            tol: self.tol(DEFAULT_EXPONENT_TOL)?,
            rmax: self.rmax()?,
        })
    }

    pub fn radial(&self) -> Result<RadialParams, CliError> {
        let e = self.pair()?;
        let kmax = self.flags.kmax.or(self.file.kmax).unwrap_or(6);
        Ok(RadialParams {
            kind: self.kind(),
            lambda: e.lambda(),
            big_lambda: e.Lambda(),
            dim: self.dim()?,
            p: self.p()?,
            tol: self.tol(DEFAULT_SHOOT_TOL)?,
            rmax: self.rmax()?,
            kmax,
        })
    }

    pub fn perturbed(&self) -> Result<PerturbedParams, CliError> {
        let e = self.pair()?;
        let kind = self.kind();
        if !matches!(kind, Kind::QPlus | Kind::PucciPlus) {
            return Err(CliError::Config(format!(
                "perturbed domains support --kind q+ or m+ (got {})",
                kind.label()
            )));
        }
        let eps = self.flags.eps.clone().or_else(|| self.file.eps.clone()).unwrap_or_else(|| vec![0.1, 0.05, 0.025]);
        if eps.is_empty() || eps.iter().any(|x| !(x.is_finite() && *x >= 0.0)) {
            return Err(CliError::Config(format!("--eps must be a non-empty list of finite amplitudes >= 0 (got {eps:?})")));
        }
        let nr = resolution("--nr", self.flags.nr.or(self.file.nr).unwrap_or(64))?;
        let ntheta = resolution("--ntheta", self.flags.ntheta.or(self.file.ntheta).unwrap_or(32))?;
        let method = self.file.method.unwrap_or(Method::Continuation);
        let homotopy = match method {
            Method::Continuation => None,
            Method::Homotopy => {
                if kind != Kind::PucciPlus {
                    return Err(CliError::Config("method = \"homotopy\" requires --kind m+".into()));
                }
                let h = self.file.homotopy.clone().unwrap_or_default();
                let steps = h.steps.unwrap_or(8);
                if steps == 0 {
                    return Err(CliError::Config("homotopy.steps must be positive".into()));
                }
                Some(HomotopyParams {
                    steps,
                    max_refinements: h.max_refinements.unwrap_or(4),
                    path: h.path.unwrap_or_default(),
                })
            }
        };
        Ok(PerturbedParams {
            kind,
            lambda: e.lambda(),
            big_lambda: e.Lambda(),
            dim: self.dim()?,
            p: self.p()?,
            eps,
            shape: self.flags.shape.or(self.file.shape).unwrap_or(ShapeArg::Cos2),
            nr,
            ntheta,
            tol: self.tol(1e-8)?,
            method,
            homotopy,
        })
    }

    pub fn table(&self) -> Result<TableParams, CliError> {
        let t = self.file.table.clone().unwrap_or_default();
        let kinds = match self.flags.kind {
            Some(k) => vec![k],
            None => t.kinds.unwrap_or_else(|| Kind::ALL.to_vec()),
        };
        let dims = match self.flags.dim {
            Some(d) => vec![d],
            None => t.dims.unwrap_or_else(|| vec![3, 4, 5, 6]),
        };
        let pairs = match (self.flags.lambda, self.flags.big_lambda) {
            (None, None) => t.pairs.unwrap_or_else(|| vec![[1.0, 1.0], [1.0, 2.0], [1.0, 3.0], [2.0, 3.0]]),
            _ => {
                let e = self.pair()?;
                vec![[e.lambda(), e.Lambda()]]
            }
        };
        if kinds.is_empty() || dims.is_empty() || pairs.is_empty() {
            return Err(CliError::Config("table needs at least one kind, dimension and pair".into()));
        }
        for &d in &dims {
            if d < 2 {
                return Err(CliError::Config(format!("table dimensions must be at least 2 (got {d})")));
            }
        }
        for &[l, big] in &pairs {
            EllipticityPair::new(l, big)?;
        }
        Ok(TableParams {
            kinds,
            dims,
            pairs,
            tol: self.tol(DEFAULT_EXPONENT_TOL)?,
            rmax: self.rmax()?,
        })
    }
}

fn positive(name: &str, v: f64) -> Result<f64, CliError> {
    if v > 0.0 && !v.is_nan() {
        Ok(v)
    } else {
        Err(CliError::Config(format!("{name} must be positive (got {v})")))
    }
}

/// Resolutions are `16·2^k`.
pub fn resolution(name: &str, n: usize) -> Result<usize, CliError> {
    if n >= 16 && n % 16 == 0 && (n / 16).is_power_of_two() {
        Ok(n)
    } else {
        Err(CliError::Config(format!("{name} must be 16 times a power of two (got {n})")))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ExponentParams {
    pub kind: Kind,
    pub lambda: f64,
    #[serde(rename = "Lambda")]
    pub big_lambda: f64,
    pub dim: usize,
    pub p_lo: f64,
    pub p_hi: f64,
    pub tol: f64,
    pub rmax: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RadialParams {
    pub kind: Kind,
    pub lambda: f64,
    #[serde(rename = "Lambda")]
    pub big_lambda: f64,
    pub dim: usize,
    pub p: f64,
    pub tol: f64,
    pub rmax: f64,
    pub kmax: u32,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct HomotopyParams {
    pub steps: usize,
    pub max_refinements: usize,
    pub path: ExponentPath,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PerturbedParams {
    pub kind: Kind,
    pub lambda: f64,
    #[serde(rename = "Lambda")]
    pub big_lambda: f64,
    pub dim: usize,
    pub p: f64,
    pub eps: Vec<f64>,
    pub shape: ShapeArg,
    pub nr: usize,
    pub ntheta: usize,
    pub tol: f64,
    pub method: Method,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub homotopy: Option<HomotopyParams>,
}

impl PerturbedParams {
    pub fn operator(&self) -> OperatorKind {
        match self.kind {
            Kind::PucciPlus => OperatorKind::PucciPlus,
            _ => OperatorKind::QPlus,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TableParams {
    pub kinds: Vec<Kind>,
    pub dims: Vec<usize>,
    pub pairs: Vec<[f64; 2]>,
    pub tol: f64,
    pub rmax: f64,
}
