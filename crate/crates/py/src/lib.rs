use pyo3::prelude::*;

#[pymodule]
fn sentinel_py(_m: &Bound<'_, PyModule>) -> PyResult<()> {
    Ok(())
}
