//! Reference external encoder: speaks the ENC1 frame protocol on
//! stdin/stdout and answers with the builtin 64-feature statistics vector.
//! Useful for exercising the external-process path end to end and as a
//! template for wrapping real models.
//!
//! Flags:
//!   --sleep-ms N   delay each response (timeout testing)
//!   --die-after N  exit abruptly after N data frames (failure testing)

use std::io::{stdin, stdout};

use pathforge::encoder::serve_enc1;
use pathforge_core::features::{stub_stats_64, STUB_STATS_DIM};
use pathforge_core::raster::RasterImage;

fn main() {
    let mut sleep_ms: u64 = 0;
    let mut die_after: Option<u64> = None;
    let args: Vec<String> = std::env::args().collect();
    let mut i = 1;
    while i < args.len() {
        match args[i].as_str() {
            "--sleep-ms" => {
                sleep_ms = args[i + 1].parse().expect("--sleep-ms takes milliseconds");
                i += 2;
            }
            "--die-after" => {
                die_after = Some(args[i + 1].parse().expect("--die-after takes a count"));
                i += 2;
            }
            other => {
                eprintln!("unknown flag {other}");
                std::process::exit(2);
            }
        }
    }
    let mut served: u64 = 0;
    let mut input = stdin().lock();
    let mut output = stdout().lock();
    let result = serve_enc1(&mut input, &mut output, STUB_STATS_DIM as u32, |batch, h, w, pixels| {
        if sleep_ms > 0 {
            std::thread::sleep(std::time::Duration::from_millis(sleep_ms));
        }
        served += 1;
        if die_after.is_some_and(|n| served > n) {
            std::process::exit(3);
        }
        let px_per = (h * w * 3) as usize;
        let mut values = Vec::with_capacity(batch as usize * STUB_STATS_DIM);
        for b in 0..batch as usize {
            let img = RasterImage::from_data(w, h, pixels[b * px_per..(b + 1) * px_per].to_vec());
            values.extend_from_slice(&stub_stats_64(&img));
        }
        values
    });
    if let Err(e) = result {
        eprintln!("stub encoder: {e}");
        std::process::exit(2);
    }
}
