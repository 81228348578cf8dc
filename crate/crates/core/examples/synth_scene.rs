//! Generates one synthetic EM patch and prints its fiber ground truth.
//!
//! cargo run --example synth_scene -- [out_dir]

use std::path::PathBuf;

use callosum::dataset::{write_gray_png, write_label};
use callosum::synthgen::{generate_scene, SyntheticSceneSpec};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let spec = SyntheticSceneSpec {
        patch_px: 256,
        fiber_count: 10,
        node_prob: 0.2,
        demyelination_prob: 0.2,
        seed: 7,
        ..Default::default()
    };
    let scene = generate_scene(&spec)?;
    println!("{:>4} {:>16} {:>6} {:>6} {:>7} {:>6}", "#", "center", "g", "axon", "myelin", "shape");
    for (i, f) in scene.fibers.iter().enumerate() {
        let mut shape = if f.elongated { "capsule" } else { "disk" }.to_string();
        if f.node {
            shape.push_str("+node");
        }
        if f.demyelinated {
            shape.push_str("+thin");
        }
        println!(
            "{i:>4} ({:>6.1}, {:>6.1}) {:>6.3} {:>6} {:>7} {shape}",
            f.center.0,
            f.center.1,
            f.g_ratio(),
            f.axon_area_px,
            f.myelin_area_px
        );
    }
    let [bg, axon, myelin] = scene.mask.histogram();
    println!("pixels: background {bg}, axon {axon}, myelin {myelin}");

    let tmp = tempfile::tempdir()?;
    let out = std::env::args().nth(1).map_or_else(|| tmp.path().to_path_buf(), PathBuf::from);
    std::fs::create_dir_all(&out)?;
    write_gray_png(&out.join("image.png"), &scene.image)?;
    write_label(&out.join("label.png"), &scene.mask)?;
    println!("wrote image.png and label.png to {}", out.display());
    Ok(())
}
