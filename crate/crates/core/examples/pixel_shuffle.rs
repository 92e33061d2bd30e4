//! Space-to-depth and back on a small labelled tensor.
//!
//! ```text
//! cargo run --example pixel_shuffle
//! ```

use g2hf::{ops, Tensor};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let x = Tensor::from_fn(&[1, 4, 4], |i| i as f64);
    let u = ops::pixel_unshuffle(&x, 2)?;
    println!("x {:?}:", x.shape());
    for row in x.data().chunks(4) {
        println!("  {row:?}");
    }
    println!("unshuffle(x, 2) {:?}:", u.shape());
    for (c, plane) in u.data().chunks(4).enumerate() {
        println!("  channel {c}: {plane:?}");
    }
    let back = ops::pixel_shuffle(&u, 2)?;
    println!("shuffle(unshuffle(x)) == x: {}", back == x);

    match ops::pixel_unshuffle(&Tensor::zeros(&[1, 6, 6]), 4) {
        Err(e) => println!("6x6 with r = 4: {e}"),
        Ok(_) => unreachable!(),
    }
    Ok(())
}
