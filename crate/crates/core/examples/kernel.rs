//! The stratum partial likelihood, its derivatives and the pairwise form.

use bigsurv::survival::{pairwise_loss, risk_set, stratum_kernel, Coefficients, Dataset, StratumView, Subject};

fn main() -> bigsurv::Result<()> {
    let data = Dataset::from_subjects(
        vec!["age".into(), "treated".into()],
        [
            Subject::new(2.0, true, vec![0.5, 1.0]),
            Subject::new(3.5, false, vec![-0.2, 0.0]),
            Subject::new(1.0, true, vec![1.1, 0.0]),
            Subject::new(4.0, true, vec![0.0, 1.0]),
            Subject::new(2.5, true, vec![-1.0, 1.0]).with_entry(1.5),
        ],
    )?;
    let beta = Coefficients(vec![0.8, -0.3]);
    let all = StratumView::full(data.len())?;

    let k = stratum_kernel(&beta, &all, &data, true)?;
    println!("log partial likelihood {:.6}", k.loglik);
    println!("gradient {:?}", k.gradient);
    println!("hessian of -pl\n{}", k.hessian.unwrap());
    // subject 4 entered at 1.5, so it is not at risk at t = 1
    println!("risk set at t = 1: {:?}", risk_set(&all, &data, 2)?);

    let pair = StratumView::new(vec![0, 3], data.len())?;
    println!("pairwise loss on (0, 3): {:.6}", pairwise_loss(&beta, &pair, &data)?);
    Ok(())
}
