//! Acceptance suite. Runs every criterion and prints one status line per
//! criterion; exits non-zero if any criterion fails.
//!
//! Criteria 4 and 5 need the full Maddison regional table. Point
//! `MADDISON_FILE` at a CSV export of it (horizontal layout, header row
//! first; set `MADDISON_FORMAT=long` for the long layout). Without it those
//! two criteria are reported as not run, with the results on the bundled
//! benchmark-year table shown for information.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};
use std::process::Command;
use std::time::{Duration, Instant};

use hypergrowth::dataset::{parse_long_csv, parse_maddison_horizontal, Observation, RegionDataset};
use hypergrowth::detection::{find_breakpoints, Criteria, PARSIMONY_GAIN};
use hypergrowth::model::reciprocal;
use hypergrowth::{
    chow_break_test, fit_hyperbolic, takeoff_test, Diversion, RegionClass, TakeoffClaim,
    Thresholds, TimeSeries, Verdict, Weighting, EPS_SSE,
};
use hypergrowth_cli::{analyze_regions, max_breaks_for, ProfileOverrides, RegionProfile};
use proptest::strategy::{Strategy, ValueTree};
use proptest::test_runner::{Config, RngAlgorithm, TestRng, TestRunner};

const REGIONS: [&str; 7] = [
    "World",
    "Western Europe",
    "Eastern Europe",
    "Former USSR",
    "Asia",
    "Africa",
    "Latin America",
];

/// Row labels used for the regional aggregates in published exports.
const ALIASES: [(&str, &[&str]); 7] = [
    ("World", &["world", "world total", "total world"]),
    (
        "Western Europe",
        &[
            "western europe",
            "total 30 w. europe",
            "30 w. europe",
            "total western europe",
            "w. europe",
        ],
    ),
    (
        "Eastern Europe",
        &[
            "eastern europe",
            "total 7 e. europe",
            "7 e. europe",
            "total eastern europe",
            "e. europe",
        ],
    ),
    ("Former USSR", &["former ussr", "total former ussr", "ussr"]),
    ("Asia", &["asia", "total asia"]),
    ("Africa", &["africa", "total africa"]),
    ("Latin America", &["latin america", "total latin america"]),
];

enum Status {
    Pass,
    Fail,
    NotRun,
}

struct Outcome {
    status: Status,
    detail: String,
}

impl Outcome {
    fn check(ok: bool, detail: String) -> Self {
        Self {
            status: if ok { Status::Pass } else { Status::Fail },
            detail,
        }
    }
}

fn data(name: &str) -> PathBuf {
    [env!("CARGO_MANIFEST_DIR"), "..", "..", "data", name]
        .iter()
        .collect()
}

fn fixture() -> RegionDataset {
    parse_maddison_horizontal(&fs::read_to_string(data("maddison_regional_gdp.csv")).unwrap())
        .unwrap()
        .scaled(0.001)
}

fn normalize(label: &str) -> String {
    label
        .split_whitespace()
        .collect::<Vec<_>>()
        .join(" ")
        .to_lowercase()
}

/// Loads the user-supplied table and maps its aggregate rows onto the
/// seven canonical region names.
fn real_dataset() -> Option<Result<RegionDataset, String>> {
    let path = std::env::var_os("MADDISON_FILE")?;
    let load = || -> Result<RegionDataset, String> {
        let text = fs::read_to_string(&path).map_err(|e| e.to_string())?;
        let ds = match std::env::var("MADDISON_FORMAT").as_deref() {
            Ok("long") => parse_long_csv(&text),
            _ => parse_maddison_horizontal(&text),
        }
        .map_err(|e| e.to_string())?;
        let mut picked = Vec::new();
        for (canonical, labels) in ALIASES {
            let series = ds
                .iter()
                .find(|s| labels.contains(&normalize(s.region()).as_str()))
                .ok_or_else(|| format!("no row for {canonical}"))?;
            picked.push(
                TimeSeries::new(canonical, series.observations().to_vec())
                    .map_err(|e| e.to_string())?,
            );
        }
        RegionDataset::new(picked, "real").map_err(|e| e.to_string())
    };
    Some(load())
}

fn runner(seed: u8) -> TestRunner {
    TestRunner::new_with_rng(
        Config::default(),
        TestRng::from_seed(RngAlgorithm::ChaCha, &[seed; 32]),
    )
}

/// Random positive series with strictly increasing integer years.
fn random_series(runner: &mut TestRunner, n: std::ops::RangeInclusive<usize>) -> TimeSeries {
    noisy_series(runner, n, 0.2..5.0)
}

/// Like [`random_series`] with multiplicative noise drawn from `noise`.
fn noisy_series(
    runner: &mut TestRunner,
    n: std::ops::RangeInclusive<usize>,
    noise: std::ops::Range<f64>,
) -> TimeSeries {
    let strategy = proptest::collection::vec((1u32..60, noise), n);
    let draws = strategy.new_tree(runner).unwrap().current();
    let mut t = 1000.0;
    let pts: Vec<(f64, f64)> = draws
        .into_iter()
        .map(|(gap, g)| {
            t += gap as f64;
            (t, g / (4.0 - 0.001 * t))
        })
        .collect();
    TimeSeries::from_pairs("R", &pts).unwrap()
}

// Brute-force oracle: every line fitted from raw normal-equation sums.
fn oracle_sse(obs: &[Observation]) -> f64 {
    let n = obs.len() as f64;
    let (mut st, mut sr, mut stt, mut str_) = (0.0, 0.0, 0.0, 0.0);
    for o in obs {
        let r = 1.0 / o.gdp;
        st += o.year;
        sr += r;
        stt += o.year * o.year;
        str_ += o.year * r;
    }
    let slope = (n * str_ - st * sr) / (n * stt - st * st);
    let intercept = (sr - slope * st) / n;
    obs.iter()
        .map(|o| (1.0 / o.gdp - intercept - slope * o.year).powi(2))
        .sum()
}

/// Enumerates every admissible single break; returns the earliest argmin
/// and its SSE, next to the unbroken SSE.
fn oracle_breaks(obs: &[Observation]) -> (f64, f64, f64) {
    let pooled = oracle_sse(obs);
    let mut best = (f64::NAN, f64::INFINITY);
    for i in 3..=obs.len() - 3 {
        let sse = oracle_sse(&obs[..i]) + oracle_sse(&obs[i..]);
        if sse < best.1 - EPS_SSE {
            best = (0.5 * (obs[i - 1].year + obs[i].year), sse);
        }
    }
    (best.0, best.1, pooled)
}

fn criterion_1() -> Outcome {
    let pts: Vec<(f64, f64)> = [0.0, 500.0, 1000.0, 1500.0, 2000.0]
        .iter()
        .map(|&t| (t, 1.0 / (5.0 - 0.002 * t)))
        .collect();
    let s = TimeSeries::from_pairs("H", &pts).unwrap();
    let fit = fit_hyperbolic(&s).unwrap();
    let mut times: Vec<Duration> = (0..101)
        .map(|_| {
            let start = Instant::now();
            std::hint::black_box(fit_hyperbolic(std::hint::black_box(&s)).unwrap());
            start.elapsed()
        })
        .collect();
    times.sort();
    let median = times[50];
    let ts = fit.singularity_year().unwrap();
    let rel = |x: f64, want: f64| ((x - want) / want).abs();
    let ok = rel(fit.params.a, 5.0) <= 1e-6
        && rel(fit.params.k, 0.002) <= 1e-6
        && rel(ts, 2500.0) <= 1e-6
        && median < Duration::from_millis(1);
    Outcome::check(
        ok,
        format!(
            "a={} k={} t_s={} median runtime {:?}",
            fit.params.a, fit.params.k, ts, median
        ),
    )
}

fn criterion_2() -> Outcome {
    let start = Instant::now();
    let mut rng = runner(2);
    let mut mismatches = Vec::new();
    let mut with_break = 0;
    for case in 0..200 {
        // A quarter of the series lie exactly on one hyperbola, where the
        // parsimony rule must reject every break.
        let s = match case % 4 {
            0 | 1 => random_series(&mut rng, 6..=30),
            2 => noisy_series(&mut rng, 6..=30, 0.995..1.005),
            _ => {
                let s = random_series(&mut rng, 6..=30);
                let pts: Vec<(f64, f64)> =
                    s.years().map(|t| (t, 1.0 / (4.0 - 0.001 * t))).collect();
                TimeSeries::from_pairs("exact", &pts).unwrap()
            }
        };
        let (mid, split, pooled) = oracle_breaks(s.observations());
        let keep = pooled - split > (PARSIMONY_GAIN * pooled).max(EPS_SSE);
        let seg = find_breakpoints(&s, 1).unwrap();
        let expected: Vec<f64> = if keep { vec![mid] } else { vec![] };
        with_break += keep as usize;
        // Below the SSE floor both values are round-off and count as zero.
        let got = seg.sse_by_breaks[1];
        let sse_ok = got.max(split) <= EPS_SSE || (got - split).abs() <= 1e-9 * split;
        if seg.breakpoints != expected || !sse_ok {
            mismatches.push(case);
        }
    }
    let elapsed = start.elapsed();
    Outcome::check(
        mismatches.is_empty() && elapsed < Duration::from_secs(5),
        format!(
            "200 series (n 6..=30), {with_break} with an accepted break, mismatches {:?}, {:?}",
            mismatches, elapsed
        ),
    )
}

fn criterion_3() -> Outcome {
    let mut pts: Vec<(f64, f64)> = (0..6).map(|i| (1500.0 + 50.0 * i as f64, 0.5)).collect();
    pts.extend((0..8).map(|i| {
        let t = 1760.0 + 20.0 * i as f64;
        (t, 0.5 * (0.01 * (t - 1750.0)).exp())
    }));
    let positive = TimeSeries::from_pairs("positive control", &pts).unwrap();
    let v = takeoff_test(
        &positive,
        TakeoffClaim::at(RegionClass::Developed, 1750.0),
        Thresholds::default(),
    );

    let mut two: Vec<(f64, f64)> = [0.0, 250.0, 500.0, 750.0, 1000.0]
        .iter()
        .map(|&t| (t, 1.0 / (3.0 - 0.001 * t)))
        .collect();
    two.extend(
        [1250.0, 1500.0, 1750.0, 2000.0]
            .iter()
            .map(|&t| (t, 1.0 / (3.5 - 0.0015 * t))),
    );
    let growth = TimeSeries::from_pairs("growth to growth", &two).unwrap();
    let g = takeoff_test(
        &growth,
        TakeoffClaim::at(RegionClass::Developed, 1000.0),
        Thresholds::default(),
    );

    let ev = v.evidence.as_ref().unwrap();
    let gev = g.evidence.as_ref().unwrap();
    Outcome::check(
        v.verdict == Verdict::Present && g.verdict == Verdict::Absent && !g.criteria.stagnation_to_growth,
        format!(
            "positive control {} (break {}, p {:.3e}, rates {:.5}/{:.5}); growth-to-growth {} (stagnation_to_growth={}, pre rate {:.5})",
            v.verdict.as_str(),
            ev.break_test.break_year,
            ev.break_test.p_value,
            ev.pre_rate,
            ev.post_rate,
            g.verdict.as_str(),
            g.criteria.stagnation_to_growth,
            gev.pre_rate,
        ),
    )
}

fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_hypergrowth"))
}

/// Runs `analyze --all-regions` on a long CSV and returns region@year ->
/// verdict, plus the wall time.
fn analyze_cli(input: &Path, out: &Path) -> Result<(BTreeMap<String, String>, Duration), String> {
    let start = Instant::now();
    let o = bin()
        .args(["analyze", "--input"])
        .arg(input)
        .args(["--all-regions", "--out"])
        .arg(out)
        .output()
        .map_err(|e| e.to_string())?;
    let elapsed = start.elapsed();
    if !o.status.success() {
        return Err(String::from_utf8_lossy(&o.stderr).into_owned());
    }
    let text = fs::read_to_string(out.join("verdicts.json")).map_err(|e| e.to_string())?;
    let json: serde_json::Value = serde_json::from_str(&text).map_err(|e| e.to_string())?;
    let verdicts = json
        .as_array()
        .unwrap()
        .iter()
        .map(|v| {
            (
                format!("{}@{}", v["region"].as_str().unwrap(), v["claimed_year"]),
                v["verdict"].as_str().unwrap().to_string(),
            )
        })
        .collect();
    Ok((verdicts, elapsed))
}

fn headline(ds: &RegionDataset, dir: &Path) -> Result<(bool, String), String> {
    let input = dir.join("input.csv");
    fs::write(&input, ds.to_long_csv()).map_err(|e| e.to_string())?;
    let (verdicts, elapsed) = analyze_cli(&input, &dir.join("results"))?;
    let expected = [
        "World@1750.0",
        "World@1900.0",
        "Western Europe@1750.0",
        "Eastern Europe@1750.0",
        "Former USSR@1750.0",
        "Asia@1900.0",
        "Africa@1900.0",
        "Latin America@1900.0",
    ];
    let mut detail = String::new();
    let mut ok = elapsed < Duration::from_secs(10);
    for key in expected {
        let got = verdicts.get(key).map(String::as_str).unwrap_or("missing");
        ok &= got == "absent";
        let _ = write!(detail, "{key}={got} ");
    }
    let _ = write!(detail, "in {elapsed:?}");
    Ok((ok, detail))
}

fn criterion_4(real: Option<&RegionDataset>) -> Outcome {
    let dir = tempfile::tempdir().unwrap();
    match real {
        Some(ds) => match headline(ds, dir.path()) {
            Ok((ok, detail)) => Outcome::check(ok, format!("real data: {detail}")),
            Err(e) => Outcome::check(false, format!("real data run failed: {e}")),
        },
        None => {
            let detail = match headline(&fixture(), dir.path()) {
                Ok((ok, d)) => format!(
                    "bundled benchmark-year table ({}): {d}",
                    if ok { "all absent" } else { "NOT all absent" }
                ),
                Err(e) => format!("bundled table run failed: {e}"),
            };
            Outcome {
                status: Status::NotRun,
                detail: format!("needs MADDISON_FILE; {detail}"),
            }
        }
    }
}

struct Structure {
    asia_breaks: Vec<f64>,
    africa_earliest: Option<f64>,
    latam_class: Option<Diversion>,
}

fn structure(ds: &RegionDataset) -> Result<Structure, String> {
    let regions: Vec<String> = ["Asia", "Africa", "Latin America"]
        .iter()
        .map(|s| s.to_string())
        .collect();
    let analyses = analyze_regions(
        ds,
        &regions,
        &ProfileOverrides::default(),
        Thresholds::default(),
        Weighting::Unweighted,
    )
    .map_err(|e| e.to_string())?;
    let breaks = |name: &str| -> Vec<f64> {
        analyses
            .iter()
            .filter(|a| a.region == name)
            .flat_map(|a| &a.transitions)
            .filter(|t| t.origin == "breakpoint")
            .map(|t| t.at)
            .collect()
    };
    Ok(Structure {
        asia_breaks: breaks("Asia"),
        africa_earliest: breaks("Africa").first().copied(),
        latam_class: analyses
            .iter()
            .find(|a| a.region == "Latin America")
            .and_then(|a| a.transitions.iter().find(|t| t.origin == "configured"))
            .map(|t| t.class),
    })
}

fn describe(s: &Structure) -> (bool, String) {
    let asia_ok = s.asia_breaks.iter().any(|b| (1940.0..=1960.0).contains(b));
    let africa_ok = s
        .africa_earliest
        .is_some_and(|b| (1810.0..=1830.0).contains(&b));
    let latam_ok = s.latam_class == Some(Diversion::Slower);
    (
        asia_ok && africa_ok && latam_ok,
        format!(
            "Asia breaks {:?} ({}); Africa earliest break {:?} ({}); Latin America post-1870 {:?} ({})",
            s.asia_breaks,
            if asia_ok { "ok" } else { "outside 1940-1960" },
            s.africa_earliest,
            if africa_ok { "ok" } else { "outside 1810-1830" },
            s.latam_class.map(Diversion::as_str),
            if latam_ok { "ok" } else { "not slower" },
        ),
    )
}

fn criterion_5(real: Option<&RegionDataset>) -> Outcome {
    match real {
        Some(ds) => match structure(ds) {
            Ok(s) => {
                let (ok, detail) = describe(&s);
                Outcome::check(ok, format!("real data: {detail}"))
            }
            Err(e) => Outcome::check(false, format!("real data run failed: {e}")),
        },
        None => {
            let info = match structure(&fixture()) {
                Ok(s) => describe(&s).1,
                Err(e) => e,
            };
            Outcome {
                status: Status::NotRun,
                detail: format!("needs MADDISON_FILE; bundled benchmark-year table: {info}"),
            }
        }
    }
}

/// Everything the invariance criterion compares, with years mapped back to
/// the original time origin.
#[derive(Debug, PartialEq)]
struct Fingerprint {
    criteria: Vec<Criteria>,
    verdicts: Vec<Verdict>,
    best_breaks: Vec<Option<f64>>,
    free_breaks: Vec<f64>,
    r2: f64,
}

fn fingerprint(s: &TimeSeries, profile: &RegionProfile, shift: f64) -> Fingerprint {
    let (mut criteria, mut verdicts, mut best_breaks) = (Vec::new(), Vec::new(), Vec::new());
    for &year in &profile.claims {
        let v = takeoff_test(
            s,
            TakeoffClaim::at(profile.class, year - shift),
            Thresholds::default(),
        );
        criteria.push(v.criteria);
        verdicts.push(v.verdict);
        best_breaks.push(v.evidence.map(|e| e.break_test.break_year + shift));
    }
    let seg = find_breakpoints(s, max_breaks_for(s.len())).unwrap();
    let w = s
        .window(profile.fit_window.0 - shift, profile.fit_window.1 - shift)
        .unwrap();
    Fingerprint {
        criteria,
        verdicts,
        best_breaks,
        free_breaks: seg.breakpoints.iter().map(|b| b + shift).collect(),
        r2: fit_hyperbolic(&w).unwrap().r2_reciprocal,
    }
}

fn same(a: &Fingerprint, b: &Fingerprint) -> bool {
    a.criteria == b.criteria
        && a.verdicts == b.verdicts
        && a.best_breaks == b.best_breaks
        && a.free_breaks == b.free_breaks
        && (a.r2 - b.r2).abs() <= 1e-9
}

fn criterion_6() -> Outcome {
    let mut failures = Vec::new();
    let mut cases = 0;
    let mut check = |s: &TimeSeries, profile: &RegionProfile, label: String| {
        let base = fingerprint(s, profile, 0.0);
        let scaled = fingerprint(&s.scaled(1000.0), profile, 0.0);
        let shifted = fingerprint(&s.shifted(1000.0), profile, 1000.0);
        cases += 1;
        if !same(&base, &scaled) || !same(&base, &shifted) {
            failures.push(label);
        }
    };
    let ds = fixture();
    for s in ds.iter() {
        check(
            s,
            &RegionProfile::for_region(s.region()),
            s.region().to_string(),
        );
    }
    let mut rng = runner(6);
    for i in 0..100 {
        let s = random_series(&mut rng, 12..=30);
        let (first, last) = (s.first_year().unwrap(), s.last_year().unwrap());
        let mid = (0.5 * (first + last)).round();
        let profile = RegionProfile {
            class: RegionClass::Developed,
            claims: vec![mid],
            fit_window: (first, last),
            transition: None,
        };
        check(&s, &profile, format!("random #{i}"));
    }

    let mut worst: f64 = 0.0;
    for s in ds.iter() {
        for (a, b) in s
            .observations()
            .iter()
            .zip(reciprocal(&reciprocal(s)).observations())
        {
            worst = worst.max(((a.gdp - b.gdp) / a.gdp).abs());
        }
    }
    Outcome::check(
        failures.is_empty() && worst <= 1e-12,
        format!(
            "{cases} series under x1000 and -1000 yr, failures {:?}; reciprocal round trip max rel err {worst:e}",
            failures
        ),
    )
}

fn criterion_7() -> Outcome {
    let mut rng = runner(7);
    let mut violations = 0;
    let mut tests = 0;
    for _ in 0..200 {
        let s = random_series(&mut rng, 6..=30);
        let obs = s.observations();
        for i in 3..=obs.len() - 3 {
            let t = chow_break_test(&s, 0.5 * (obs[i - 1].year + obs[i].year)).unwrap();
            tests += 1;
            let ok = t.sse_split <= t.sse_pooled * (1.0 + 1e-12) + EPS_SSE
                && t.f_statistic >= 0.0
                && (0.0..=1.0).contains(&t.p_value);
            violations += !ok as usize;
        }
    }

    // p antitone in F on a grid of break positions with fixed n.
    let pts: Vec<(f64, f64)> = (0..25)
        .map(|i| {
            let t = 1500.0 + 20.0 * i as f64;
            let wobble = 1.0 + 0.05 * ((i * 37 % 11) as f64 / 11.0 - 0.5);
            (t, wobble / (5.0 - 0.0022 * t))
        })
        .collect();
    let s = TimeSeries::from_pairs("grid", &pts).unwrap();
    let mut grid: Vec<(f64, f64)> = (3..=22)
        .map(|i| {
            let t = chow_break_test(&s, 1490.0 + 20.0 * i as f64).unwrap();
            (t.f_statistic, t.p_value)
        })
        .collect();
    grid.sort_by(|a, b| a.0.total_cmp(&b.0));
    let antitone = grid.windows(2).all(|w| w[1].1 <= w[0].1);
    Outcome::check(
        violations == 0 && antitone,
        format!(
            "{tests} break tests on 200 random series, {violations} violations; p antitone in F on a {}-point grid: {antitone}",
            grid.len()
        ),
    )
}

fn criterion_8() -> Outcome {
    let dir = tempfile::tempdir().unwrap();
    let input = dir.path().join("input.csv");
    fs::write(&input, fixture().to_long_csv()).unwrap();
    let mut bundles = Vec::new();
    for run in 0..2 {
        let out = dir.path().join(format!("run{run}"));
        if let Err(e) = analyze_cli(&input, &out) {
            return Outcome::check(false, e);
        }
        let mut files = BTreeMap::new();
        for entry in fs::read_dir(&out).unwrap() {
            let path = entry.unwrap().path();
            files.insert(
                path.file_name().unwrap().to_owned(),
                fs::read(&path).unwrap(),
            );
        }
        bundles.push(files);
    }
    let identical = bundles[0] == bundles[1];
    Outcome::check(
        identical && bundles[0].len() == 4 + REGIONS.len(),
        format!(
            "{} files per run, byte-identical: {identical}",
            bundles[0].len()
        ),
    )
}

type Check<'a> = Box<dyn Fn() -> Outcome + 'a>;

fn main() {
    let real = real_dataset();
    let real = match real {
        Some(Ok(ds)) => Some(ds),
        Some(Err(e)) => {
            println!("MADDISON_FILE could not be used: {e}");
            std::process::exit(1);
        }
        None => None,
    };

    let criteria: [(&str, Check); 8] = [
        ("exact recovery", Box::new(criterion_1)),
        ("oracle equivalence", Box::new(criterion_2)),
        ("positive control", Box::new(criterion_3)),
        (
            "headline reproduction",
            Box::new(|| criterion_4(real.as_ref())),
        ),
        (
            "structure localization",
            Box::new(|| criterion_5(real.as_ref())),
        ),
        ("invariance", Box::new(criterion_6)),
        ("statistical sanity", Box::new(criterion_7)),
        ("determinism", Box::new(criterion_8)),
    ];
    let mut failed = 0;
    for (i, (name, run)) in criteria.iter().enumerate() {
        let outcome = run();
        let tag = match outcome.status {
            Status::Pass => "PASS",
            Status::Fail => {
                failed += 1;
                "FAIL"
            }
            Status::NotRun => "NOT RUN",
        };
        println!(
            "criterion {} {name}: {tag} - {}",
            i + 1,
            outcome.detail
        );
    }
    if failed > 0 {
        println!("{failed} criteria failed");
        std::process::exit(1);
    }
}
