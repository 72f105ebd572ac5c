//! Golden-file cases for the `kanrelu` binary, shared by the cli and acceptance targets.
//!
//! Set `UPDATE_GOLDEN=1` to rewrite the golden files from the current binary.

#![allow(dead_code)]

use std::path::{Path, PathBuf};
use std::process::{Command, Output};

pub struct Case {
    pub name: &'static str,
    pub args: &'static [&'static str],
    pub exit: i32,
    /// Golden file holding the expected stdout.
    pub stdout: Option<&'static str>,
    /// `(file written under {out}, golden file)` pairs compared byte for byte.
    pub files: &'static [(&'static str, &'static str)],
    /// Substring expected on stderr.
    pub stderr_contains: Option<&'static str>,
}

const fn case(name: &'static str, args: &'static [&'static str], exit: i32) -> Case {
    Case {
        name,
        args,
        exit,
        stdout: None,
        files: &[],
        stderr_contains: None,
    }
}

impl Case {
    const fn stdout(mut self, golden: &'static str) -> Self {
        self.stdout = Some(golden);
        self
    }

    const fn files(mut self, files: &'static [(&'static str, &'static str)]) -> Self {
        self.files = files;
        self
    }

    const fn stderr(mut self, needle: &'static str) -> Self {
        self.stderr_contains = Some(needle);
        self
    }
}

pub const CASES: &[Case] = &[
    case("eval_f_star", &["eval", "{fx}/f_star_kan.json", "--input", "2"], 0).stdout("eval_f_star.txt"),
    case("eval_f_star_json", &["--json", "eval", "{fx}/f_star_kan.json", "--input", "-2"], 0)
        .stdout("eval_f_star_neg.json"),
    case("eval_kan_2d", &["eval", "{fx}/kan_2d.json", "--input", "1.5,-0.5"], 0).stdout("eval_kan_2d.txt"),
    case("convert_exact", &["convert", "--to", "mlp", "--mode", "exact", "{fx}/f_star_kan.json", "{out}/m.json"], 0)
        .files(&[("m.json", "f_star_mlp_exact.json")]),
    case(
        "convert_paper_sparse",
        &["convert", "--to", "mlp", "--mode", "paper", "--sparse", "{fx}/f_star_kan.json", "{out}/m.json"],
        0,
    )
    .files(&[("m.json", "f_star_mlp_paper_sparse.json")]),
    case("convert_kan_2d", &["convert", "--to", "mlp", "{fx}/kan_2d.json", "{out}/m.json"], 0)
        .files(&[("m.json", "kan_2d_mlp_exact.json")]),
    case("convert_abs_to_kan", &["convert", "--to", "kan", "{fx}/abs_mlp.json", "{out}/k.json"], 0)
        .files(&[("k.json", "abs_kan.json")]),
    case(
        "convert_spline",
        &["convert", "--to", "monomial-relu", "--degree", "2", "{fx}/square_flip_spline.json", "{out}/n.json"],
        0,
    )
    .files(&[("n.json", "square_flip_monomial.json")]),
    case("convert_unsupported", &["convert", "--to", "kan", "{fx}/square_flip_spline.json", "{out}/x.json"], 2)
        .stderr("cannot convert"),
    case("eval_monomial_neg", &["eval", "{golden}/square_flip_monomial.json", "--input", "-1"], 0)
        .stdout("eval_square_flip_neg.txt"),
    case("eval_monomial_zero", &["eval", "{golden}/square_flip_monomial.json", "--input", "0"], 0)
        .stdout("eval_square_flip_zero.txt"),
    case("eval_monomial_pos", &["eval", "{golden}/square_flip_monomial.json", "--input", "1"], 0)
        .stdout("eval_square_flip_pos.txt"),
    case("eval_hat_bspline", &["eval", "{fx}/input_forms/hat_bspline.json", "--input", "1.5"], 0)
        .stdout("eval_hat.txt"),
    case(
        "verify_sampled",
        &["--json", "verify", "{fx}/f_star_kan.json", "{golden}/f_star_mlp_exact.json", "--tol", "1e-8"],
        0,
    )
    .stdout("verify_f_star.json"),
    case(
        "verify_exact_1d",
        &["--json", "verify", "{fx}/f_star_kan.json", "{golden}/f_star_mlp_exact.json", "--exact-1d", "--tol", "1e-9"],
        0,
    )
    .stdout("verify_f_star_exact.json"),
    case(
        "verify_2d",
        &["--json", "verify", "{fx}/kan_2d.json", "{golden}/kan_2d_mlp_exact.json", "--samples", "2000", "--box", "-3", "3"],
        0,
    )
    .stdout("verify_kan_2d.json"),
    case(
        "verify_mismatch",
        &["--json", "verify", "{fx}/f_star_kan.json", "{fx}/abs_mlp.json", "--samples", "500"],
        1,
    )
    .stdout("verify_mismatch.json"),
    case("verify_exact_1d_2d_model", &["verify", "{fx}/kan_2d.json", "{fx}/kan_2d.json", "--exact-1d"], 2)
        .stderr("unsupported input dimension"),
    case("params_worked", &["--json", "params", "{fx}/mlp_worked.json", "--paper-formula"], 0)
        .stdout("params_mlp_worked.json"),
    case("params_kan", &["--json", "params", "{fx}/kan_2d.json", "--paper-formula"], 0).stdout("params_kan_2d.json"),
    case("params_converted", &["--json", "params", "{golden}/f_star_mlp_exact.json"], 0)
        .stdout("params_f_star_mlp.json"),
    case("bounds_mlp", &["--json", "bounds", "{fx}/mlp_worked.json"], 0).stdout("bounds_mlp_worked.json"),
    case("bounds_abs", &["--json", "bounds", "{fx}/abs_mlp.json"], 0).stdout("bounds_abs.json"),
    case("bounds_kan", &["--json", "bounds", "{fx}/kan_2d.json"], 0).stdout("bounds_kan_2d.json"),
    case("regions_f_star", &["--json", "regions", "{fx}/f_star_kan.json", "--out", "{out}/c.json"], 0)
        .files(&[("c.json", "f_star_complex.json")]),
    case("regions_abs", &["regions", "{fx}/abs_mlp.json", "--out", "{out}/c.json"], 0)
        .files(&[("c.json", "abs_complex.json")]),
    case("regions_2d", &["regions", "{fx}/kan_2d.json", "--out", "{out}/c.json"], 2)
        .stderr("unsupported input dimension"),
    case(
        "fingerprint_kan_2d",
        &["fingerprint", "{fx}/kan_2d.json", "--box", "-2", "2", "-2", "2", "--res", "32", "--out", "{out}/g.csv"],
        0,
    )
    .files(&[("g.csv", "kan_2d_grid.csv")]),
    case(
        "fingerprint_1d",
        &["fingerprint", "{fx}/f_star_kan.json", "--box", "-1", "1", "-1", "1", "--res", "16", "--out", "{out}/g.csv"],
        2,
    )
    .stderr("unsupported input dimension"),
    case("embed_f_star", &["--json", "embed-check", "{fx}/f_star_kan.json"], 0).stdout("embed_f_star.json"),
    case("embed_kan_2d", &["--json", "embed-check", "{fx}/kan_2d.json"], 0).stdout("embed_kan_2d.json"),
    case("invalid_output_activation", &["eval", "{fx}/invalid/relu_output.json", "--input", "1"], 1)
        .stderr("identity"),
    case("invalid_truncated", &["eval", "{fx}/invalid/truncated.json", "--input", "1"], 1).stderr("line"),
    case("usage_missing_arg", &["verify", "{fx}/f_star_kan.json"], 2),
    case("usage_bad_input", &["eval", "{fx}/f_star_kan.json", "--input", "two"], 2),
];

pub fn tests_dir() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("tests")
}

pub fn fixtures_dir() -> PathBuf {
    tests_dir().join("fixtures")
}

pub fn golden_dir() -> PathBuf {
    tests_dir().join("golden")
}

pub fn run_cli(args: &[String]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_kanrelu"))
        .args(args)
        .output()
        .expect("binary runs")
}

fn updating() -> bool {
    std::env::var_os("UPDATE_GOLDEN").is_some()
}

fn compare(golden: &Path, actual: &[u8]) -> Result<(), String> {
    if updating() {
        std::fs::write(golden, actual).map_err(|e| e.to_string())?;
        return Ok(());
    }
    let expected = std::fs::read(golden).map_err(|e| format!("{}: {e}", golden.display()))?;
    if expected != actual {
        return Err(format!(
            "{} differs:\n--- expected\n{}\n--- actual\n{}",
            golden.display(),
            String::from_utf8_lossy(&expected),
            String::from_utf8_lossy(actual)
        ));
    }
    Ok(())
}

/// Runs one case; `Err` describes the first mismatch.
pub fn run_case(case: &Case) -> Result<(), String> {
    let out = tempfile::tempdir().map_err(|e| e.to_string())?;
    let subst = |a: &str| {
        a.replace("{fx}", &fixtures_dir().display().to_string())
            .replace("{golden}", &golden_dir().display().to_string())
            .replace("{out}", &out.path().display().to_string())
    };
    let args: Vec<String> = case.args.iter().map(|a| subst(a)).collect();
    let o = run_cli(&args);
    let code = o.status.code().unwrap_or(-1);
    if code != case.exit {
        return Err(format!(
            "exit code {code}, expected {}; stderr: {}",
            case.exit,
            String::from_utf8_lossy(&o.stderr)
        ));
    }
    if let Some(needle) = case.stderr_contains {
        let err = String::from_utf8_lossy(&o.stderr);
        if !err.contains(needle) {
            return Err(format!("stderr {err:?} lacks {needle:?}"));
        }
    }
    if let Some(g) = case.stdout {
        compare(&golden_dir().join(g), &o.stdout)?;
    }
    for (file, g) in case.files {
        let actual = std::fs::read(out.path().join(file)).map_err(|e| format!("{file}: {e}"))?;
        compare(&golden_dir().join(g), &actual)?;
    }
    Ok(())
}

/// Runs every case and returns `(name, error)` for the failures.
pub fn run_golden_suite() -> Vec<(&'static str, String)> {
    CASES
        .iter()
        .filter_map(|c| run_case(c).err().map(|e| (c.name, e)))
        .collect()
}

/// Every fixture file below `fixtures/` that is expected to load.
pub fn loadable_fixtures() -> Vec<PathBuf> {
    let mut out = Vec::new();
    for dir in [fixtures_dir(), fixtures_dir().join("input_forms"), golden_dir()] {
        for e in std::fs::read_dir(&dir).expect("fixture dir") {
            let p = e.expect("dir entry").path();
            if p.extension().is_some_and(|x| x == "json") && is_model_file(&p) {
                out.push(p);
            }
        }
    }
    out.sort();
    out
}

fn is_model_file(p: &Path) -> bool {
    std::fs::read_to_string(p).is_ok_and(|s| s.contains("\"kind\""))
}
