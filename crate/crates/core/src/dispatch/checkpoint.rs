//! Text checkpoint of a [`QFunction`]. Parameters are stored as the hex bit
//! patterns of their `f64` widening, so a round trip is exact for both `f32`
//! and `f64`.

use std::fmt::Write as _;
use std::io::{BufRead, Write};

use super::qfunction::{Profile, QConfig, QFunction};
use super::schedule::Linear;
use crate::error::{Error, Result};
use crate::num::Real;

const MAGIC: &str = "ridepool-q";
const VERSION: u32 = 1;

fn hex_line<R: Real>(values: &[R]) -> String {
    let mut s = String::with_capacity(values.len() * 17);
    for (i, v) in values.iter().enumerate() {
        if i > 0 {
            s.push(' ');
        }
        write!(s, "{:016x}", v.as_f64().to_bits()).expect("write to string");
    }
    s
}

fn parse_hex<R: Real>(line: &str, expected: usize, what: &str) -> Result<Vec<R>> {
    let vals: Vec<R> = line
        .split_ascii_whitespace()
        .map(|t| u64::from_str_radix(t, 16).map(|b| R::of(f64::from_bits(b))))
        .collect::<std::result::Result<_, _>>()
        .map_err(|e| Error::Checkpoint(format!("{what} parameters: {e}")))?;
    if vals.len() != expected {
        return Err(Error::Checkpoint(format!("{what} has {} parameters, expected {expected}", vals.len())));
    }
    Ok(vals)
}

pub fn save<R: Real, W: Write>(q: &QFunction<R>, mut out: W) -> Result<()> {
    let c = &q.config;
    let (crop, hidden) = match c.profile {
        Profile::Compact { crop, hidden } | Profile::Dense { crop, hidden } => (crop, hidden),
        Profile::Deep => (super::qfunction::DEEP_WINDOW, 0),
    };
    let bits = |v: R| format!("{:016x}", v.as_f64().to_bits());
    writeln!(out, "{MAGIC} {VERSION}")?;
    writeln!(out, "grid {} {}", c.grid.0, c.grid.1)?;
    writeln!(out, "profile {} {crop} {hidden}", c.profile.name())?;
    writeln!(out, "eta {}", bits(c.eta))?;
    writeln!(out, "epsilon {} {} {}", bits(c.epsilon.start), bits(c.epsilon.end), c.epsilon.span)?;
    writeln!(
        out,
        "learning_rate {} {} {}",
        bits(c.learning_rate.start),
        bits(c.learning_rate.end),
        c.learning_rate.span
    )?;
    writeln!(out, "sync_every {}", c.sync_every)?;
    writeln!(out, "batch_size {}", c.batch_size)?;
    writeln!(out, "replay_capacity {}", c.replay_capacity)?;
    writeln!(out, "reward_scale {}", bits(c.reward_scale))?;
    match c.td_clip {
        Some(v) => writeln!(out, "td_clip {}", bits(v))?,
        None => writeln!(out, "td_clip none")?,
    }
    writeln!(out, "seed {}", c.seed)?;
    writeln!(out, "steps {}", q.steps())?;
    writeln!(out, "updates {}", q.updates())?;
    writeln!(out, "params {}", q.online().param_count())?;
    writeln!(out, "online {}", hex_line(q.online().params()))?;
    writeln!(out, "target {}", hex_line(q.target().params()))?;
    Ok(())
}

pub fn load<R: Real, B: BufRead>(input: B) -> Result<QFunction<R>> {
    let mut fields = std::collections::BTreeMap::new();
    for (i, line) in input.lines().enumerate() {
        let line = line?;
        let (key, rest) = line.split_once(' ').unwrap_or((line.as_str(), ""));
        if i == 0 {
            if key != MAGIC || rest.trim() != VERSION.to_string() {
                return Err(Error::Checkpoint(format!("unsupported header {line:?}")));
            }
            continue;
        }
        fields.insert(key.to_string(), rest.to_string());
    }
    let get = |k: &str| fields.get(k).ok_or_else(|| Error::Checkpoint(format!("missing field {k}")));
    let words = |k: &str| -> Result<Vec<String>> { Ok(get(k)?.split_ascii_whitespace().map(str::to_string).collect()) };
    let int = |s: &str, k: &str| s.parse::<u64>().map_err(|e| Error::Checkpoint(format!("{k}: {e}")));
    let real = |s: &str, k: &str| -> Result<R> {
        u64::from_str_radix(s, 16).map(|b| R::of(f64::from_bits(b))).map_err(|e| Error::Checkpoint(format!("{k}: {e}")))
    };
    let one = |k: &str| -> Result<String> {
        words(k)?.into_iter().next().ok_or_else(|| Error::Checkpoint(format!("empty field {k}")))
    };

    let grid = words("grid")?;
    let prof = words("profile")?;
    if grid.len() != 2 || prof.len() != 3 {
        return Err(Error::Checkpoint("malformed grid or profile line".into()));
    }
    let profile = match prof[0].as_str() {
        "compact" => {
            Profile::Compact { crop: int(&prof[1], "crop")? as usize, hidden: int(&prof[2], "hidden")? as usize }
        }
        "dense" => Profile::Dense { crop: int(&prof[1], "crop")? as usize, hidden: int(&prof[2], "hidden")? as usize },
        "deep" => Profile::Deep,
        other => return Err(Error::Checkpoint(format!("unknown profile {other}"))),
    };
    let sched = |k: &str| -> Result<Linear<R>> {
        let w = words(k)?;
        if w.len() != 3 {
            return Err(Error::Checkpoint(format!("malformed {k} line")));
        }
        Ok(Linear::new(real(&w[0], k)?, real(&w[1], k)?, int(&w[2], k)?.max(1)))
    };
    let td_clip = match one("td_clip")?.as_str() {
        "none" => None,
        v => Some(real(v, "td_clip")?),
    };
    let config = QConfig {
        profile,
        eta: real(&one("eta")?, "eta")?,
        epsilon: sched("epsilon")?,
        learning_rate: sched("learning_rate")?,
        sync_every: int(&one("sync_every")?, "sync_every")?,
        batch_size: int(&one("batch_size")?, "batch_size")? as usize,
        replay_capacity: int(&one("replay_capacity")?, "replay_capacity")? as usize,
        reward_scale: real(&one("reward_scale")?, "reward_scale")?,
        td_clip,
        seed: int(&one("seed")?, "seed")?,
        grid: (int(&grid[0], "grid")? as usize, int(&grid[1], "grid")? as usize),
    };
    config.validate()?;
    let mut online = profile.build::<R>(config.seed)?;
    let count = int(&one("params")?, "params")? as usize;
    if count != online.param_count() {
        return Err(Error::Checkpoint(format!("{count} parameters recorded, profile has {}", online.param_count())));
    }
    let mut target = online.clone();
    online.params_mut().copy_from_slice(&parse_hex::<R>(get("online")?, count, "online")?);
    target.params_mut().copy_from_slice(&parse_hex::<R>(get("target")?, count, "target")?);
    let steps = int(&one("steps")?, "steps")?;
    let updates = int(&one("updates")?, "updates")?;
    Ok(QFunction::restore(config, online, target, steps, updates))
}

pub fn save_file<R: Real>(q: &QFunction<R>, path: &std::path::Path) -> Result<()> {
    let file = std::fs::File::create(path)?;
    let mut w = std::io::BufWriter::new(file);
    save(q, &mut w)?;
    w.flush()?;
    Ok(())
}

pub fn load_file<R: Real>(path: &std::path::Path) -> Result<QFunction<R>> {
    let file =
        std::fs::File::open(path).map_err(|e| Error::Checkpoint(format!("cannot open {}: {e}", path.display())))?;
    load(std::io::BufReader::new(file))
}
