//! Trapezium geometry on one driving instance: fit the minimum-area
//! trapezium around a motorcycle and its riders, inspect its parameters,
//! and compare rider IOUs against the axis-aligned alternatives.
//!
//! Run with: `cargo run --example fit_trapezium`

use moto_violations::geometry::{rect_iou, trap_rect_iou, Rect};
use moto_violations::regressors::fit_params;
use moto_violations::synth::min_area_trapezium;

fn main() -> anyhow::Result<()> {
    let moto = Rect::new(700.0, 600.0, 920.0, 790.0)?;
    let riders = [
        Rect::new(740.0, 330.0, 850.0, 760.0)?,
        Rect::new(790.0, 290.0, 890.0, 700.0)?,
        Rect::new(840.0, 250.0, 950.0, 650.0)?,
    ];
    // A rider from the neighboring motorcycle, leaning into the scene.
    let impostor = Rect::new(990.0, 280.0, 1100.0, 690.0)?;

    let mut boxes = vec![moto];
    boxes.extend(riders);
    let trapezium = min_area_trapezium(&boxes)?;

    println!("instance trapezium (TL, TR, BR, BL):");
    for v in trapezium.vertices() {
        println!("  ({:7.2}, {:7.2})", v.x, v.y);
    }
    let c = trapezium.centroid();
    println!("area {:.0} px^2, centroid ({:.1}, {:.1})", trapezium.area(), c.x, c.y);

    let params = fit_params(&trapezium, &moto)?;
    println!(
        "params: X={:.1} Y={:.1} W={:.1} offsets=({:.1}, {:.1}, {:.1}, {:.1})",
        params.x, params.y, params.w, params.d_tl, params.d_tr, params.d_br, params.d_bl
    );

    // The bounding rectangle covers far more background than the trapezium.
    let mut bbox = moto;
    for r in &riders {
        bbox = bbox.union_bbox(r);
    }
    println!(
        "\ntrapezium area / bounding-rect area = {:.2}",
        trapezium.area() / bbox.area()
    );

    println!("\nrider IOUs (true riders vs a neighboring rider):");
    println!("{:>10} {:>12} {:>12}", "box", "trapezium", "instance rect");
    for (name, r) in riders
        .iter()
        .enumerate()
        .map(|(i, r)| (format!("rider {i}"), r))
        .chain(std::iter::once(("impostor".to_string(), &impostor)))
    {
        println!(
            "{name:>10} {:>12.3} {:>12.3}",
            trap_rect_iou(&trapezium, r),
            rect_iou(&bbox, r)
        );
    }
    Ok(())
}
