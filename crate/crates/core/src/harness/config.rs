//! Run configuration as flat `key = value` text.

use std::fmt;
use std::path::{Path, PathBuf};

use crate::discretization::{RhsConfig, VolumeScheme};
use crate::error::{Error, Result};
use crate::euler::GasParams;
use crate::fluxes::FluxKind;
use crate::geometry::MeshMapping;
use crate::harness::ic::InitialCondition;
use crate::kernels_batched::BatchWidth;
use crate::operators::MAX_DEGREE;
use crate::timeint::{StepController, StopCondition};

/// Environment variable overriding the output directory.
pub const OUTPUT_DIR_ENV: &str = "FLUXDIFF_OUTPUT_DIR";

/// Default amplitude of the curved mapping.
pub const DEFAULT_AMPLITUDE: f64 = 0.3;

#[derive(Debug, Clone, PartialEq)]
pub struct RunConfig {
    pub d: usize,
    pub p: usize,
    pub elements: usize,
    pub mesh: MeshMapping,
    pub rhs: RhsConfig,
    pub ic: InitialCondition,
    pub gamma: f64,
    pub cfl: f64,
    pub stop: StopCondition,
    pub output: PathBuf,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            d: 2,
            p: 3,
            elements: 8,
            mesh: MeshMapping::Cartesian,
            rhs: RhsConfig::default(),
            ic: InitialCondition::IsentropicVortex { epsilon: 20.0 },
            gamma: 1.4,
            cfl: 0.5,
            stop: StopCondition::Steps(90),
            output: PathBuf::from("fluxdiff_out"),
        }
    }
}

pub const KEYS: [&str; 19] = [
    "d",
    "p",
    "elements",
    "mesh",
    "amplitude",
    "scheme",
    "volume_flux",
    "surface_flux",
    "precompute",
    "parallel",
    "batch_width",
    "ic",
    "epsilon",
    "seed",
    "gamma",
    "cfl",
    "n_steps",
    "t_end",
    "output",
];

fn parse<T: std::str::FromStr>(key: &str, value: &str) -> Result<T> {
    value.parse().map_err(|_| Error::config(key, format!("cannot parse `{value}`")))
}

/// Renames the field of a configuration error to the key the user wrote.
fn rename(key: &str) -> impl Fn(Error) -> Error + '_ {
    move |e| match e {
        Error::Config { reason, .. } => Error::config(key, reason),
        e => e,
    }
}

impl RunConfig {
    /// Settings of the vortex convergence study.
    pub fn convergence_default() -> Self {
        Self {
            rhs: RhsConfig::new(VolumeScheme::FluxDiff, FluxKind::RanochaEc, FluxKind::Llf),
            stop: StopCondition::EndTime(10.0),
            ..Self::default()
        }
    }

    /// Applies one `key = value` setting.
    pub fn set(&mut self, key: &str, value: &str) -> Result<()> {
        let value = value.trim();
        match key.trim() {
            "d" => self.d = parse(key, value)?,
            "p" => self.p = parse(key, value)?,
            "elements" => self.elements = parse(key, value)?,
            "mesh" => {
                self.mesh = match value {
                    "cartesian" => MeshMapping::Cartesian,
                    "curved" => MeshMapping::Curved { amplitude: self.amplitude().unwrap_or(DEFAULT_AMPLITUDE) },
                    _ => return Err(Error::config(key, format!("expected cartesian or curved, got `{value}`"))),
                }
            }
            "amplitude" => {
                let a = parse(key, value)?;
                if a == 0.0 {
                    self.mesh = MeshMapping::Cartesian;
                } else {
                    self.mesh = MeshMapping::Curved { amplitude: a };
                }
            }
            "scheme" => self.rhs.volume_scheme = value.parse().map_err(rename(key))?,
            "volume_flux" => self.rhs.volume_flux = value.parse().map_err(rename(key))?,
            "surface_flux" => self.rhs.surface_flux = value.parse().map_err(rename(key))?,
            "precompute" => self.rhs.precompute = value.parse().map_err(rename(key))?,
            "parallel" => self.rhs.parallel = parse(key, value)?,
            "batch_width" => {
                let w: usize = parse(key, value)?;
                self.rhs.batch = if w == 0 { None } else { Some(BatchWidth::new(w).map_err(rename(key))?) };
            }
            "ic" => {
                let ic: InitialCondition = value.parse().map_err(rename(key))?;
                // keep parameters set earlier
                self.ic = match (ic, self.ic) {
                    (InitialCondition::IsentropicVortex { .. }, InitialCondition::IsentropicVortex { epsilon }) => {
                        InitialCondition::IsentropicVortex { epsilon }
                    }
                    (InitialCondition::Random { .. }, InitialCondition::Random { seed }) => InitialCondition::Random { seed },
                    (ic, _) => ic,
                };
            }
            "epsilon" => self.ic = InitialCondition::IsentropicVortex { epsilon: parse(key, value)? },
            "seed" => self.ic = InitialCondition::Random { seed: parse(key, value)? },
            "gamma" => self.gamma = parse(key, value)?,
            "cfl" => self.cfl = parse(key, value)?,
            "n_steps" => self.stop = StopCondition::Steps(parse(key, value)?),
            "t_end" => self.stop = StopCondition::EndTime(parse(key, value)?),
            "output" => self.output = PathBuf::from(value),
            other => return Err(Error::config(other, format!("unknown key; expected one of {}", KEYS.join(", ")))),
        }
        Ok(())
    }

    fn amplitude(&self) -> Option<f64> {
        match self.mesh {
            MeshMapping::Curved { amplitude } => Some(amplitude),
            MeshMapping::Cartesian => None,
        }
    }

    /// Applies `key=value` strings in order.
    pub fn apply_overrides<S: AsRef<str>>(&mut self, overrides: &[S]) -> Result<()> {
        for o in overrides {
            let o = o.as_ref();
            let (k, v) = o.split_once('=').ok_or_else(|| Error::config(o, "overrides take the form key=value"))?;
            self.set(k, v)?;
        }
        Ok(())
    }

    /// Applies the settings of a config text: one `key = value` per line, `#` starts a comment.
    pub fn apply_text(&mut self, text: &str) -> Result<()> {
        for (i, line) in text.lines().enumerate() {
            let line = line.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let (k, v) = line
                .split_once('=')
                .ok_or_else(|| Error::config("config", format!("line {}: expected key = value, got `{line}`", i + 1)))?;
            self.set(k, v)?;
        }
        Ok(())
    }

    pub fn apply_file(&mut self, path: &Path) -> Result<()> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| Error::config("config", format!("cannot read {}: {e}", path.display())))?;
        self.apply_text(&text)
    }

    pub fn gas(&self) -> Result<GasParams> {
        GasParams::new(self.gamma).map_err(|e| Error::config("gamma", e.to_string()))
    }

    pub fn controller(&self) -> Result<StepController> {
        StepController::new(self.cfl)
    }

    pub fn validate(&self) -> Result<()> {
        if !(2..=3).contains(&self.d) {
            return Err(Error::config("d", format!("must be 2 or 3, got {}", self.d)));
        }
        if !(1..=MAX_DEGREE).contains(&self.p) {
            return Err(Error::config("p", format!("must be in 1..={MAX_DEGREE}, got {}", self.p)));
        }
        if self.elements == 0 {
            return Err(Error::config("elements", "must be positive"));
        }
        if let Some(a) = self.amplitude() {
            if !(a.is_finite() && a > 0.0) {
                return Err(Error::config("amplitude", format!("must be positive, got {a}")));
            }
        }
        self.gas()?;
        self.controller()?;
        match self.stop {
            StopCondition::EndTime(t) if !(t.is_finite() && t >= 0.0) => {
                return Err(Error::config("t_end", format!("must be finite and nonnegative, got {t}")))
            }
            _ => {}
        }
        self.rhs.validate(self.p, self.mesh == MeshMapping::Cartesian)
    }

    /// `FLUXDIFF_OUTPUT_DIR` if set, else the configured path.
    pub fn output_dir(&self) -> PathBuf {
        std::env::var_os(OUTPUT_DIR_ENV).map(PathBuf::from).unwrap_or_else(|| self.output.clone())
    }

    pub fn mesh_name(&self) -> String {
        match self.mesh {
            MeshMapping::Cartesian => "cartesian".into(),
            MeshMapping::Curved { amplitude } => format!("curved({amplitude})"),
        }
    }
}

impl fmt::Display for RunConfig {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let stop = match self.stop {
            StopCondition::Steps(n) => format!("n_steps={n}"),
            StopCondition::EndTime(t) => format!("t_end={t}"),
        };
        write!(
            f,
            "d={} p={} elements={} mesh={} scheme={} volume_flux={} surface_flux={} precompute={} ic={} cfl={} {stop}",
            self.d,
            self.p,
            self.elements,
            self.mesh_name(),
            self.rhs.volume_scheme,
            self.rhs.volume_flux,
            self.rhs.surface_flux,
            self.rhs.precompute,
            self.ic,
            self.cfl
        )?;
        if let Some(w) = self.rhs.batch {
            write!(f, " batch_width={}", w.lanes())?;
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn field(e: Error) -> String {
        match e {
            Error::Config { field, .. } => field,
            e => panic!("not a config error: {e}"),
        }
    }

    #[test]
    fn text_and_overrides() {
        let mut c = RunConfig::default();
        c.apply_text("# comment\nd = 3\n p=4 # trailing\nmesh = curved\namplitude=0.2\nscheme = overintegration(6)\n\nic = random\nseed = 9\nt_end = 1.5\n")
            .unwrap();
        assert_eq!((c.d, c.p), (3, 4));
        assert_eq!(c.mesh, MeshMapping::Curved { amplitude: 0.2 });
        assert_eq!(c.rhs.volume_scheme, VolumeScheme::Overintegration { q: 6 });
        assert_eq!(c.ic, InitialCondition::Random { seed: 9 });
        assert_eq!(c.stop, StopCondition::EndTime(1.5));
        // overintegration needs a Cartesian mesh
        assert_eq!(field(c.validate().unwrap_err()), "mesh");
        c.apply_overrides(&["mesh=cartesian", "batch_width=0"]).unwrap();
        c.validate().unwrap();
        c.apply_overrides(&["scheme=fluxdiff", "batch_width=8", "precompute=logs"]).unwrap();
        assert_eq!(c.rhs.batch, Some(BatchWidth::new(8).unwrap()));
        c.validate().unwrap();
    }

    #[test]
    fn errors_name_the_field() {
        let mut c = RunConfig::default();
        assert_eq!(field(c.set("p", "three").unwrap_err()), "p");
        assert_eq!(field(c.set("volume_flux", "roe").unwrap_err()), "volume_flux");
        assert_eq!(field(c.set("batch_width", "3").unwrap_err()), "batch_width");
        assert_eq!(field(c.set("colour", "red").unwrap_err()), "colour");
        assert_eq!(field(c.apply_overrides(&["p"]).unwrap_err()), "p");
        assert_eq!(field(c.apply_text("p 3").unwrap_err()), "config");
        assert_eq!(field(c.apply_file(Path::new("/nonexistent/run.cfg")).unwrap_err()), "config");
        c.set("volume_flux", "llf").unwrap();
        assert_eq!(field(c.validate().unwrap_err()), "volume_flux");
        for (k, v) in [("d", "4"), ("p", "16"), ("elements", "0"), ("gamma", "1.0"), ("cfl", "-1"), ("t_end", "nan")] {
            let mut c = RunConfig::default();
            c.set(k, v).unwrap();
            assert_eq!(field(c.validate().unwrap_err()), k);
        }
    }

    #[test]
    fn every_key_is_accepted() {
        let values = [
            "3", "2", "4", "curved", "0.25", "weak", "shima_etal", "hll", "none", "true", "4", "sinusoidal", "10", "1", "1.3", "0.4",
            "5", "2.0", "out",
        ];
        let mut c = RunConfig::default();
        for (k, v) in KEYS.iter().zip(values) {
            c.set(k, v).unwrap_or_else(|e| panic!("{k}: {e}"));
        }
        assert!(c.to_string().contains("d=3"));
    }
}
