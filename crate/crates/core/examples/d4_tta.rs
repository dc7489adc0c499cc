//! Test-time augmentation over the dihedral group of the square.
//!
//! cargo run --example d4_tta

use lenslike::d4::{orbit, tta_average, tta_average_with, D4Element, Map2D, Symmetry};
use lenslike::Vec2;
use ndarray::{array, Array2};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let map = Map2D::unmasked(array![[1.0, 2.0, 3.0], [4.0, 5.0, 6.0]]);
    for (e, image) in D4Element::ALL.iter().zip(orbit(&map, Symmetry::Full)) {
        println!("{:>14}: shape {:?} first row {:?}", e.name(), image.shape(), image.data.row(0).to_vec());
    }

    // A predictor that is not symmetric: it weights the top-left corner.
    let predict = |m: &Map2D| -> Result<Vec2, String> {
        let w = Array2::from_shape_fn(m.shape(), |(i, j)| 1.0 / (1.0 + i as f64 + j as f64));
        Ok(Vec2::new((&m.data * &w).sum(), m.data.sum()))
    };
    let plain = predict(&map)?;
    let averaged = tta_average(predict, &map)?;
    let rotated = tta_average(predict, &D4Element::Rot90.apply(&map))?;
    println!("single pass {plain:?}");
    println!("averaged    {averaged:?}");
    println!("rotated in  {rotated:?} (identical: {})", averaged == rotated);

    // A predictor fixed to the 2x3 shape fails on transposed images; the
    // shape-preserving subgroup works.
    let fixed = |m: &Map2D| -> Result<Vec2, String> {
        if m.shape() == (2, 3) { Ok(Vec2::new(m.data[(0, 0)], 0.0)) } else { Err(format!("expects 2x3, got {:?}", m.shape())) }
    };
    if let Err(e) = tta_average(fixed, &map) {
        println!("full group: {e}");
    }
    println!("rectangle subgroup: {:?}", tta_average_with(fixed, &map, Symmetry::RectanglePreserving)?);
    Ok(())
}
