//! Consensus distances from participant groupings, a reference clustering,
//! and its agreement with a model clustering.
//!
//! `cargo run --example cluster_quality`

use vizsim::eval::{
    consensus_matrix, cut_k, hac_ward, ClusterLabels, ClusterScores, GroupingRecord,
};

fn main() -> vizsim::Result<()> {
    let ids: Vec<String> = (0..8).map(|i| format!("s{i}")).collect();
    let group = |members: &[usize]| members.iter().map(|&i| ids[i].clone()).collect::<Vec<_>>();
    // Participants may place a stimulus in more than one group.
    let records = vec![
        GroupingRecord {
            participant: "p1".into(),
            groups: vec![group(&[0, 1, 2, 3]), group(&[4, 5, 6, 7])],
        },
        GroupingRecord {
            participant: "p2".into(),
            groups: vec![group(&[0, 1]), group(&[2, 3, 4]), group(&[5, 6, 7])],
        },
        GroupingRecord {
            participant: "p3".into(),
            groups: vec![group(&[0, 1, 2]), group(&[3, 4, 5, 6, 7]), group(&[2, 3])],
        },
    ];
    let consensus = consensus_matrix(&ids, &records)?;
    print!("{}", consensus.to_csv_string());

    let reference = cut_k(&hac_ward(&consensus)?, 2)?;
    let model = ClusterLabels::new(ids.clone(), vec![0, 0, 0, 1, 1, 1, 1, 1])?;
    let scores = ClusterScores::compute(&reference, &model)?;
    println!("reference labels {:?}", reference.labels);
    for (name, v) in scores.as_pairs() {
        println!("{name:>3} {v:.4}");
    }
    Ok(())
}
