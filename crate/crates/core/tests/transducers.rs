mod common;

use common::transducers::mismatches;
use sitl_planner::rat::int;
use sitl_planner::tst::elementary_eventually;

#[test]
fn closed_eventually_matches_oracle() {
    for b in 1..=2 {
        let t = elementary_eventually("p", "y", "c", &int(b), true).unwrap();
        let name = format!("F(0,{b}]");
        assert_eq!(mismatches(&name, &t, &format!("F(0,{b}] p"), &["p"], 6, 200, 50 + b as u64), 0);
    }
}
