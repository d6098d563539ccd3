//! Compares the two detectors on fresh test draws of the two-cluster scenario.
//!
//! ```text
//! cargo run --release --example separation -- [nu] [m] [mixture|component] [seeds]
//! ```
//!
//! Prints, per seed, the DiGMM balanced accuracy at its own boundary, the
//! baseline's best balanced accuracy over all thresholds, and the baseline at
//! the fixed thresholds `e^-7` and `e^-4.3`.

use digmm::dataio::{generate_scenario, AnomalyProposal, AnomalyRule, ScenarioSpec};
use digmm::detector::ThresholdGmmModel;
use digmm::eval::{balanced_accuracy_at, best_threshold_accuracy, evaluate, score_dataset};
use digmm::{fit_digmm, fit_em, Dataset64, EmConfig};

fn main() -> digmm::Result<()> {
    let args: Vec<String> = std::env::args().collect();
    let nu: f64 = args.get(1).map_or(0.05, |s| s.parse().expect("nu"));
    let m: usize = args.get(2).map_or(2, |s| s.parse().expect("m"));
    let rule = match args.get(3).map(String::as_str) {
        Some("mixture") => AnomalyRule::MixtureQuantile,
        _ => AnomalyRule::ComponentQuantile,
    };
    let seeds: u64 = args.get(4).map_or(10, |s| s.parse().expect("seeds"));

    let spec = |seed: u64| {
        let mut s = ScenarioSpec::paper_like(seed);
        if rule == AnomalyRule::MixtureQuantile {
            s.rule = rule;
            s.quantile = 0.001;
            s.proposal = AnomalyProposal::UniformBox;
        }
        s
    };
    println!("peak density ratio {:.2}", spec(0).peak_density_ratio()?);
    println!("seed  digmm@0  base_best  base@-7  base@-4.3  gap     auc_d   auc_b");
    let (mut sum_gap, mut sum_d, mut sum_b) = (0.0, 0.0, 0.0);
    for seed in 0..seeds {
        let train: Dataset64 = generate_scenario(&spec(seed))?;
        let test: Dataset64 = generate_scenario(&spec(10_000 + seed))?;
        let normal = train.normal_only();
        let em = EmConfig::with_seed(seed);

        let model = fit_digmm(&normal, m, nu, &em, digmm::ocsvm::DEFAULT_TOL)?;
        let rep_d = evaluate(&model, &test)?;
        let acc_d = rep_d.balanced_accuracy_at_zero();

        let (gmm, _) = fit_em(&normal, m, &em)?;
        let base = ThresholdGmmModel::new(gmm, 0.0)?;
        let scored = score_dataset(&base, &test)?;
        let best = best_threshold_accuracy(&scored.scores, &scored.labels)?;
        let at7 = balanced_accuracy_at(&scored.scores, &scored.labels, -7.0)?;
        let at43 = balanced_accuracy_at(&scored.scores, &scored.labels, -4.3)?;
        let rep_b = evaluate(&base, &test)?;

        let gap = acc_d - best;
        sum_gap += gap;
        sum_d += acc_d;
        sum_b += best;
        println!(
            "{seed:>4}  {acc_d:.4}   {best:.4}     {at7:.4}   {at43:.4}     {gap:+.4}  {:.4}  {:.4}",
            rep_d.auc, rep_b.auc
        );
    }
    let k = seeds as f64;
    println!(
        "mean  {:.4}   {:.4}                          {:+.4}",
        sum_d / k,
        sum_b / k,
        sum_gap / k
    );
    Ok(())
}
