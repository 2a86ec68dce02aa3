//! Bit-packed mask algebra and run-length encoding.

use compexp::prelude::*;

pub fn run_example() -> Result<()> {
    let a = BitMask::from_rows(&[[1u8, 1, 0, 0], [1, 1, 0, 0], [0, 0, 0, 0]]);
    let b = BitMask::from_rows(&[[0u8, 1, 1, 0], [0, 1, 1, 0], [0, 1, 1, 0]]);

    let and = mask_apply(MaskOp::And, &a, Some(&b))?;
    let or = mask_apply(MaskOp::Or, &a, Some(&b))?;
    let not_a = mask_apply(MaskOp::Not, &a, None)?;
    println!("|a|={} |b|={} |a AND b|={} |a OR b|={} |NOT a|={}",
        a.popcount(), b.popcount(), and.popcount(), or.popcount(), not_a.popcount());
    assert_eq!(and.popcount() + or.popcount(), a.popcount() + b.popcount());

    // De Morgan: NOT (a OR b) == NOT a AND NOT b
    assert_eq!(or.not(), a.not().and(&b.not())?);

    let runs = rle_encode(&or);
    println!("RLE of a OR b: {:?} ({} ones of {})", runs.runs(), runs.ones(), runs.total());
    assert_eq!(rle_decode(&runs, 3, 4)?, or);
    Ok(())
}

fn main() {
    run_example().expect("mask algebra example");
}
