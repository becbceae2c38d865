use losmimo::validation::{run_criterion, ValidationOptions, CRITERIA};

#[test]
fn acceptance_criteria() {
    let opts = ValidationOptions { include_n96: true, ..ValidationOptions::default() };
    let mut failed = Vec::new();
    for id in 1..=CRITERIA {
        let c = run_criterion(id, &opts).expect("criterion runs");
        println!("{c}");
        if !c.passed {
            failed.push(id);
        }
    }
    assert!(failed.is_empty(), "failed criteria: {failed:?}");
}
