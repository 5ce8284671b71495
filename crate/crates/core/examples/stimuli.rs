//! Renders the standard color, shape, size and size-color palettes.
//!
//! `cargo run --example stimuli -- [out_dir]`

use vizsim::eval::VisualChannel;
use vizsim::stimuli::{write_palette, PaletteSpec};

fn main() -> vizsim::Result<()> {
    let out = std::env::args()
        .nth(1)
        .map_or_else(|| std::env::temp_dir().join("vizsim-stimuli"), Into::into);
    for channel in VisualChannel::ALL {
        let spec = PaletteSpec::standard(channel)?;
        let files = write_palette(&spec, &out)?;
        let labels: Vec<&str> = spec.entries.iter().map(|e| e.label.as_str()).collect();
        println!(
            "{channel}: {} images [{}]",
            files.len() - 1,
            labels.join(", ")
        );
    }
    println!("written under {}", out.display());
    Ok(())
}
