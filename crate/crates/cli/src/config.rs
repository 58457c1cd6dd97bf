//! Flat INI configuration. Keys in the unnamed section apply to every command; a section
//! named after the command overrides them. Lists are comma separated.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use calkit::field::ScalarField;
use calkit::geometry::{make_grid, Grid, Vec3};
use calkit::io::load_field;
use calkit::C64;
use ini::Ini;

#[derive(Debug)]
pub struct ConfigError(pub String);

impl std::fmt::Display for ConfigError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(&self.0)
    }
}

pub type CResult<T> = std::result::Result<T, ConfigError>;

fn cerr<T>(msg: impl Into<String>) -> CResult<T> {
    Err(ConfigError(msg.into()))
}

pub struct Config {
    pub path: PathBuf,
    pub raw: Vec<u8>,
    pub values: BTreeMap<String, String>,
}

impl Config {
    pub fn load(path: &Path, command: &str) -> CResult<Self> {
        let raw = std::fs::read(path).map_err(|e| ConfigError(format!("cannot read {}: {e}", path.display())))?;
        let text = String::from_utf8_lossy(&raw);
        let ini = Ini::load_from_str(&text).map_err(|e| ConfigError(format!("malformed config {}: {e}", path.display())))?;
        let mut values = BTreeMap::new();
        for (k, v) in ini.general_section().iter() {
            values.insert(k.trim().to_string(), v.trim().to_string());
        }
        if let Some(sec) = ini.section(Some(command)) {
            for (k, v) in sec.iter() {
                values.insert(k.trim().to_string(), v.trim().to_string());
            }
        }
        Ok(Config { path: path.to_path_buf(), raw, values })
    }

    pub fn str_or<'a>(&'a self, key: &str, default: &'a str) -> &'a str {
        self.values.get(key).map(|s| s.as_str()).unwrap_or(default)
    }

    pub fn get<T: std::str::FromStr>(&self, key: &str) -> CResult<Option<T>> {
        match self.values.get(key) {
            None => Ok(None),
            Some(v) => v.parse().map(Some).map_err(|_| ConfigError(format!("bad value for {key}: {v:?}"))),
        }
    }

    pub fn get_or<T: std::str::FromStr>(&self, key: &str, default: T) -> CResult<T> {
        Ok(self.get(key)?.unwrap_or(default))
    }

    pub fn list_f64(&self, key: &str, default: &[f64]) -> CResult<Vec<f64>> {
        match self.values.get(key) {
            None => Ok(default.to_vec()),
            Some(v) => v
                .split(',')
                .map(|t| t.trim().parse::<f64>().map_err(|_| ConfigError(format!("bad list entry in {key}: {t:?}"))))
                .collect(),
        }
    }

    pub fn vec3(&self, key: &str, default: Vec3) -> CResult<Vec3> {
        let v = self.list_f64(key, &default)?;
        if v.len() != 3 {
            return cerr(format!("{key} needs three comma-separated numbers"));
        }
        Ok([v[0], v[1], v[2]])
    }

    pub fn grid(&self) -> CResult<Grid> {
        let r = self.get_or("R", 2.0)?;
        let l = self.get_or("L", 1.0)?;
        let m = self.get_or("m", 17usize)?;
        let big_m = self.get_or("M", 32usize)?;
        make_grid(r, l, m, big_m).map_err(|e| ConfigError(e.to_string()))
    }

    fn resolve(&self, rel: &str) -> PathBuf {
        let p = Path::new(rel);
        if p.is_absolute() {
            p.to_path_buf()
        } else {
            self.path.parent().unwrap_or(Path::new(".")).join(p)
        }
    }

    /// Potential from a spec: `zero`, `bump`, `const:<c>` or `file:<path>`. Bump parameters
    /// come from `<key>_amp` (1) and `<key>_sigma` (0.3), centred at the origin.
    pub fn potential(&self, key: &str, default: &str, grid: &Grid) -> CResult<ScalarField> {
        let spec = self.str_or(key, default);
        if spec == "zero" {
            return Ok(ScalarField::zeros(grid));
        }
        if spec == "bump" {
            let amp: f64 = self.get_or(&format!("{key}_amp"), 1.0)?;
            let sigma: f64 = self.get_or(&format!("{key}_sigma"), 0.3)?;
            return Ok(gaussian_bump(grid, amp, sigma));
        }
        self.common_spec(key, spec, grid)
    }

    /// Conductivity from a spec: `const:<c>`, `bump` (1 + amp·Π(1 − x_i²/L²)^power with
    /// `<key>_amp` = 0.5, `<key>_power` = 3), `exp_x1`, or `file:<path>`.
    pub fn conductivity(&self, key: &str, default: &str, grid: &Grid) -> CResult<ScalarField> {
        let spec = self.str_or(key, default);
        if spec == "bump" {
            let amp: f64 = self.get_or(&format!("{key}_amp"), 0.5)?;
            let power: i32 = self.get_or(&format!("{key}_power"), 3)?;
            return Ok(vanishing_bump(grid, amp, power));
        }
        if spec == "exp_x1" {
            return Ok(ScalarField::from_real_fn(grid, |x| x[0].exp()));
        }
        self.common_spec(key, spec, grid)
    }

    fn common_spec(&self, key: &str, spec: &str, grid: &Grid) -> CResult<ScalarField> {
        if let Some(c) = spec.strip_prefix("const:") {
            let c: f64 = c.trim().parse().map_err(|_| ConfigError(format!("bad constant in {key}: {spec:?}")))?;
            return Ok(ScalarField::from_fn(grid, |_| C64::new(c, 0.0)));
        }
        if let Some(p) = spec.strip_prefix("file:") {
            return load_field(&self.resolve(p.trim()), Some(grid)).map_err(|e| ConfigError(format!("{key}: {e}")));
        }
        cerr(format!("unknown field spec for {key}: {spec:?}"))
    }
}

pub fn gaussian_bump(grid: &Grid, amp: f64, sigma: f64) -> ScalarField {
    ScalarField::from_real_fn(grid, |x| amp * (-(x[0] * x[0] + x[1] * x[1] + x[2] * x[2]) / (2.0 * sigma * sigma)).exp())
}

pub fn vanishing_bump(grid: &Grid, amp: f64, power: i32) -> ScalarField {
    let l = grid.l;
    ScalarField::from_real_fn(grid, |x| 1.0 + amp * x.iter().map(|t| (1.0 - t * t / (l * l)).powi(power)).product::<f64>())
}
