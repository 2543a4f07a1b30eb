//! How quickly uniform random actions stop reaching the far end of the chain.

use varq::envs::chain_random_reach_prob;

fn main() -> varq::Result<()> {
    println!("{:>4}  {:>12}", "N", "P(reach s_N)");
    for n in [3, 5, 8, 10, 15, 20, 25, 30, 40, 50] {
        println!("{n:>4}  {:>12.3e}", chain_random_reach_prob(n)?);
    }
    Ok(())
}
