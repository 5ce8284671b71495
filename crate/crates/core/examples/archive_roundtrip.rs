//! Writes a seeded random-weight archive, reloads it, and checks the checksum.
//!
//! `cargo run --example archive_roundtrip -- [arch] [seed] [out_dir]`

use vizsim::nn::{load_archive, random_init, save_archive, ArchName, ArchitectureSpec};

fn main() -> vizsim::Result<()> {
    let mut args = std::env::args().skip(1);
    let arch: ArchName = args.next().as_deref().unwrap_or("squeezenet").parse()?;
    let seed: u64 = args
        .next()
        .map_or(Ok(0), |s| s.parse())
        .map_err(|_| vizsim::Error::Invalid("seed must be an integer".into()))?;
    let out = args.next().map_or_else(
        || std::env::temp_dir().join(format!("{arch}-random-{seed}")),
        Into::into,
    );

    let spec = ArchitectureSpec::get(arch)?;
    let archive = random_init(&spec, seed);
    save_archive(&archive, &out)?;
    let back = load_archive(&out)?;
    assert_eq!(back, archive);
    println!(
        "{arch}: {} tensors, {} parameters",
        back.len(),
        back.total_elements()
    );
    println!("sha256 {}", back.checksum());
    println!("written to {}", out.display());
    Ok(())
}
