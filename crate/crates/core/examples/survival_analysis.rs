//! Censoring imputation, median split, Kaplan-Meier curves and the log-rank test.

use radiomics::report::km_svg;
use radiomics::survival::{impute_censored, km_estimate, logrank_test, median_split, Observation};

fn main() -> radiomics::Result<()> {
    let cohort: Vec<Observation> = vec![
        (3.2, true), (4.8, true), (6.0, false), (7.5, true), (9.1, true), (11.0, true),
        (18.0, true), (22.5, false), (26.0, true), (31.0, true), (38.5, false), (44.0, true),
    ];
    let imputed = impute_censored(&cohort)?;
    let (labels, median) = median_split(&imputed)?;
    println!("imputed times {imputed:?}");
    println!("median {median}: labels {labels:?}");

    let (short, long): (Vec<_>, Vec<_>) = cohort.iter().zip(&labels).partition(|(_, &l)| l == 0);
    let short: Vec<Observation> = short.into_iter().map(|(o, _)| *o).collect();
    let long: Vec<Observation> = long.into_iter().map(|(o, _)| *o).collect();

    let km_short = km_estimate(&short);
    let km_long = km_estimate(&long);
    print!("short group\n{}", km_short.to_csv());
    print!("long group\n{}", km_long.to_csv());

    let t = logrank_test(&short, &long)?;
    println!("chi2 {:.4}, p {:.3e}, HR {:?}, 95% CI {:?}", t.chi2, t.p_value, t.hazard_ratio, t.ci95);

    let svg = km_svg("true median-split groups", &[("short", &km_short), ("long", &km_long)]);
    let path = std::env::temp_dir().join("radiomics_km_example.svg");
    std::fs::write(&path, svg)?;
    println!("wrote {}", path.display());
    Ok(())
}
