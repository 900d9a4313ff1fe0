//! Writes a synthetic textured test image.
//!
//! `cargo run --release --example make_scene -- out.png [size] [seed]`

fn main() -> did::Result<()> {
    let mut args = std::env::args().skip(1);
    let out = args.next().unwrap_or_else(|| "scene.png".into());
    let size = args
        .next()
        .map_or(128, |s| s.parse().expect("size must be an integer"));
    let seed = args
        .next()
        .map_or(1, |s| s.parse().expect("seed must be an integer"));
    let img = did::scene::textured_scene(size, size, seed)?;
    did::signal::save_image(&img, &out)?;
    println!("wrote {out}");
    Ok(())
}
