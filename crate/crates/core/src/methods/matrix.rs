use super::{run_chain, run_milp, Method, MethodContext, MethodResult};
use crate::error::Result;
use crate::network::Configuration;

#[derive(Debug, Clone)]
pub struct MatrixCell {
    pub configuration: Configuration,
    pub result: MethodResult,
}

#[derive(Debug, Clone)]
pub struct MatrixReport {
    pub cells: Vec<MatrixCell>,
}

impl MatrixReport {
    pub fn get(&self, configuration: Configuration, method: Method) -> Option<&MethodResult> {
        self.cells
            .iter()
            .find(|c| c.configuration == configuration && c.result.method == method)
            .map(|c| &c.result)
    }
}

/// Every requested method on every configuration. The MILP does not see
/// the network, so it is solved once and shared.
pub fn run_method_matrix(
    ctx: &MethodContext,
    configurations: &[Configuration],
    methods: &[Method],
) -> Result<MatrixReport> {
    let milp = run_milp(ctx)?;
    let mut cells = Vec::new();
    for &configuration in configurations {
        for result in run_chain(ctx, configuration, methods, Some(&milp))? {
            cells.push(MatrixCell {
                configuration,
                result,
            });
        }
    }
    Ok(MatrixReport { cells })
}
