//! File emission. Every file is written to a temporary sibling and renamed
//! into place, so readers never see a partial file.

use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use anyhow::{Context, Result};
use serde::Serialize;

pub struct OutDir {
    root: PathBuf,
}

impl OutDir {
    pub fn create(root: &Path) -> Result<Self> {
        fs::create_dir_all(root).with_context(|| format!("cannot create {}", root.display()))?;
        Ok(Self { root: root.to_path_buf() })
    }

    pub fn sub(&self, name: &str) -> Result<Self> {
        Self::create(&self.root.join(name))
    }

    pub fn write_bytes(&self, name: &str, bytes: &[u8]) -> Result<PathBuf> {
        let target = self.root.join(name);
        let tmp = self.root.join(format!(".{name}.tmp"));
        {
            let mut f = fs::File::create(&tmp).with_context(|| format!("cannot create {}", tmp.display()))?;
            f.write_all(bytes)?;
            f.sync_all()?;
        }
        fs::rename(&tmp, &target).with_context(|| format!("cannot move {} into place", target.display()))?;
        Ok(target)
    }

    pub fn write_text(&self, name: &str, text: &str) -> Result<PathBuf> {
        self.write_bytes(name, text.as_bytes())
    }

    /// Serializes `rows` with a header taken from the row type.
    pub fn write_rows<T: Serialize>(&self, name: &str, rows: &[T]) -> Result<PathBuf> {
        let mut w = csv::WriterBuilder::new().has_headers(true).from_writer(Vec::new());
        for r in rows {
            w.serialize(r)?;
        }
        self.write_bytes(name, &w.into_inner()?)
    }

    /// Writes an explicit header and records; used when the header must be
    /// present even with no rows, or columns are dynamic.
    pub fn write_table(&self, name: &str, header: &[&str], rows: &[Vec<String>]) -> Result<PathBuf> {
        let mut w = csv::Writer::from_writer(Vec::new());
        w.write_record(header)?;
        for r in rows {
            w.write_record(r)?;
        }
        self.write_bytes(name, &w.into_inner()?)
    }
}

/// Shortest round-trip representation, so CSV values reload bit-identically.
pub fn num(x: f64) -> String {
    format!("{x:?}")
}

const PREAMBLE: &str = "#!/usr/bin/env python3\n\"\"\"Generated plot script; run from the output directory.\"\"\"\nimport csv\nfrom collections import defaultdict\n\nimport matplotlib\nmatplotlib.use(\"Agg\")\nimport matplotlib.pyplot as plt\n\n\ndef read(name):\n    with open(name, newline=\"\") as f:\n        return list(csv.DictReader(f))\n\n\n";

pub fn plot_trajectory() -> String {
    format!(
        "{PREAMBLE}rows = read(\"trajectory.csv\")\nby_time = defaultdict(list)\nfor row in rows:\n    by_time[float(row[\"time\"])].append((float(row[\"r\"]), float(row[\"u\"])))\ntimes = sorted(by_time)\npick = times[:: max(1, len(times) // 8)] + [times[-1]]\nfig, ax = plt.subplots()\nfor t in pick:\n    r, u = zip(*by_time[t])\n    ax.plot(r, u, label=f\"t = {{t:.3g}}\")\nax.set_xlabel(\"r\")\nax.set_ylabel(\"u\")\nax.legend(fontsize=\"small\")\nfig.savefig(\"trajectory.png\", dpi=150)\n"
    )
}

pub fn plot_norms() -> String {
    format!(
        "{PREAMBLE}rows = read(\"norms.csv\")\nt = [float(r[\"time\"]) for r in rows]\nfig, ax = plt.subplots()\nfor key in [\"L1\", \"L2\", \"Lq+1\", \"Linf\"]:\n    ax.plot(t, [float(r[key]) for r in rows], label=key)\nax.set_xlabel(\"t\")\nax.set_ylabel(\"norm\")\nax.legend()\nfig.savefig(\"norms.png\", dpi=150)\n"
    )
}

pub fn plot_ladder() -> String {
    format!(
        "{PREAMBLE}rows = read(\"ladder.csv\")\nk = [int(r[\"k\"]) for r in rows]\nfig, ax = plt.subplots()\nax.semilogy(k, [max(float(r[\"J_k\"]), 1e-300) for r in rows], \"o-\", label=\"J_k\")\nax.semilogy(k, [float(r[\"bound_rhs\"]) for r in rows], \"--\", label=\"A^(-k/nu) J_0\")\nax.set_xlabel(\"k\")\nax.legend()\nfig.savefig(\"ladder.png\", dpi=150)\n"
    )
}

pub fn plot_rate() -> String {
    format!(
        "{PREAMBLE}fits = read(\"rate_fit.csv\")\nsupport = read(\"support.csv\")\nfig, ax = plt.subplots()\n# support.csv lists the runs in the same order as rate_fit.csv\nruns = {{}}\nfor row in support:\n    t, rho = float(row[\"time\"]), float(row[\"support_radius\"])\n    pts = runs.setdefault((row[\"p\"], row[\"q\"], row[\"amplitude\"]), [])\n    if t > 0 and rho > 0:\n        pts.append((t, rho))\nfor ((p, q, amp), pts), fit in zip(runs.items(), fits):\n    if not pts:\n        continue\n    t, rho = zip(*pts)\n    ax.loglog(t, rho, label=f\"p={{p}} q={{q}} amplitude {{amp}}\")\n    lo, hi = float(fit[\"window_lo\"]), float(fit[\"window_hi\"])\n    beta = float(fit[\"beta_theory\"])\n    inside = [(a, b) for a, b in pts if lo <= a <= hi]\n    if inside:\n        t0, r0 = inside[0]\n        ax.loglog([lo, hi], [r0 * (lo / t0) ** (1 / beta), r0 * (hi / t0) ** (1 / beta)], \"k--\", lw=0.8)\nax.set_xlabel(\"t\")\nax.set_ylabel(\"support radius\")\nax.set_title(\"dashed: slope 1/beta_theory\")\nax.legend(fontsize=\"small\")\nfig.savefig(\"rate_fit.png\", dpi=150)\n"
    )
}

pub fn plot_dead_core() -> String {
    format!(
        "{PREAMBLE}rows = read(\"dead_core.csv\")\nfig, axes = plt.subplots(1, 2, figsize=(9, 4))\nfor ax, sweep, key in zip(axes, [\"amplitude\", \"radius\"], [\"amplitude\", \"b0_radius\"]):\n    pts = [(float(r[key]), float(r[\"t0\"])) for r in rows if r[\"sweep\"] == sweep]\n    if pts:\n        x, y = zip(*pts)\n        ax.loglog(x, y, \"o-\")\n    ax.set_xlabel(key)\n    ax.set_ylabel(\"t0\")\nfig.tight_layout()\nfig.savefig(\"dead_core.png\", dpi=150)\n"
    )
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn atomic_write_leaves_no_temp() {
        let dir = tempfile::tempdir().unwrap();
        let out = OutDir::create(dir.path()).unwrap();
        out.write_text("a.txt", "hello").unwrap();
        out.write_text("a.txt", "again").unwrap();
        let names: Vec<_> = fs::read_dir(dir.path()).unwrap().map(|e| e.unwrap().file_name()).collect();
        assert_eq!(names, vec![std::ffi::OsString::from("a.txt")]);
        assert_eq!(fs::read_to_string(dir.path().join("a.txt")).unwrap(), "again");
    }

    #[test]
    fn numbers_round_trip() {
        for x in [0.1, 1.0 / 3.0, 1e-300, 12345.678] {
            assert_eq!(num(x).parse::<f64>().unwrap(), x);
        }
    }
}
