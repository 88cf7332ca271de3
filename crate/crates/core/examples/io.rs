//! Writes a matrix in each supported format and reads it back.

use sepnmf::io::{read_matrix, write_matrix, MatrixFormat};
use sepnmf::rng::Stream;

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let a = Stream::new(1).gaussian_matrix(5, 7);
    let dir = std::env::temp_dir().join("sepnmf-io-example");
    std::fs::create_dir_all(&dir)?;
    for fmt in [MatrixFormat::Mtx, MatrixFormat::Bin, MatrixFormat::Csv] {
        let path = dir.join(format!("a.{}", fmt.extension()));
        write_matrix(&path, &a, fmt)?;
        let back = read_matrix(&path)?;
        println!("{}: exact round trip {}", path.display(), back == a);
    }
    Ok(())
}
