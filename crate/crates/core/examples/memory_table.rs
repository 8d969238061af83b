//! Weights-plus-optimizer-state memory for the bundled LLaMA-style shapes.

use scale_opt::diagnostics::{memory_table, write_memory_csv, ModelShape};

fn main() -> scale_opt::Result<()> {
    for name in ["llama_1b", "llama_7b"] {
        let shape = ModelShape::bundled(name)?;
        println!("# {name}: {} parameters", shape.total_params());
        write_memory_csv(std::io::stdout().lock(), &memory_table(&shape)?)?;
        println!();
    }
    Ok(())
}
