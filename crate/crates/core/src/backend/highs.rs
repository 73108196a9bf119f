//! Minimal safe wrapper over the HiGHS C API.

use std::ffi::{c_void, CString};
use std::os::raw::c_int;

use highs_sys::*;

/// Row-wise sparse LP/MILP in the layout HiGHS expects.
#[derive(Debug, Clone, Default)]
pub struct SparseModel {
    pub col_cost: Vec<f64>,
    pub col_lower: Vec<f64>,
    pub col_upper: Vec<f64>,
    pub row_lower: Vec<f64>,
    pub row_upper: Vec<f64>,
    pub row_start: Vec<c_int>,
    pub row_index: Vec<c_int>,
    pub row_value: Vec<f64>,
    pub integrality: Option<Vec<c_int>>,
    pub offset: f64,
}

impl SparseModel {
    pub fn n_cols(&self) -> usize {
        self.col_cost.len()
    }

    pub fn n_rows(&self) -> usize {
        self.row_lower.len()
    }

    pub fn add_col(&mut self, cost: f64, lower: f64, upper: f64) -> usize {
        self.col_cost.push(cost);
        self.col_lower.push(lower);
        self.col_upper.push(upper);
        self.col_cost.len() - 1
    }

    pub fn add_row(
        &mut self,
        lower: f64,
        upper: f64,
        terms: impl IntoIterator<Item = (usize, f64)>,
    ) {
        self.row_start.push(self.row_index.len() as c_int);
        for (col, val) in terms {
            if val != 0.0 {
                self.row_index.push(col as c_int);
                self.row_value.push(val);
            }
        }
        self.row_lower.push(lower);
        self.row_upper.push(upper);
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ModelStatus {
    Optimal,
    Infeasible,
    Unbounded,
    TimeLimit,
    IterationLimit,
    Other(c_int),
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Basis {
    pub cols: Vec<c_int>,
    pub rows: Vec<c_int>,
}

pub struct Highs {
    ptr: *mut c_void,
}

// The handle is only ever used by one thread at a time.
unsafe impl Send for Highs {}

impl Highs {
    pub fn new() -> Self {
        let ptr = unsafe { Highs_create() };
        assert!(!ptr.is_null(), "Highs_create returned null");
        let h = Highs { ptr };
        h.set_bool(
            "output_flag",
            std::env::var_os("DESOPF_HIGHS_LOG").is_some(),
        );
        h
    }

    pub fn set_bool(&self, name: &str, value: bool) -> bool {
        let c = CString::new(name).expect("option name");
        unsafe { Highs_setBoolOptionValue(self.ptr, c.as_ptr(), value as c_int) == STATUS_OK }
    }

    pub fn set_int(&self, name: &str, value: i32) -> bool {
        let c = CString::new(name).expect("option name");
        unsafe { Highs_setIntOptionValue(self.ptr, c.as_ptr(), value as c_int) == STATUS_OK }
    }

    pub fn set_f64(&self, name: &str, value: f64) -> bool {
        let c = CString::new(name).expect("option name");
        unsafe { Highs_setDoubleOptionValue(self.ptr, c.as_ptr(), value) == STATUS_OK }
    }

    pub fn set_str(&self, name: &str, value: &str) -> bool {
        let c = CString::new(name).expect("option name");
        let v = CString::new(value).expect("option value");
        unsafe { Highs_setStringOptionValue(self.ptr, c.as_ptr(), v.as_ptr()) == STATUS_OK }
    }

    /// Loads a model, replacing any previous one.
    pub fn pass(&mut self, m: &SparseModel) -> Result<(), String> {
        let n_col = m.n_cols() as c_int;
        let n_row = m.n_rows() as c_int;
        let nnz = m.row_index.len() as c_int;
        // HiGHS reads row_start[0..n_row]; give it a non-dangling pointer
        // even for empty models.
        let mut starts = m.row_start.clone();
        if starts.is_empty() {
            starts.push(0);
        }
        let status = unsafe {
            match &m.integrality {
                Some(integrality) => Highs_passMip(
                    self.ptr,
                    n_col,
                    n_row,
                    nnz,
                    MATRIX_FORMAT_ROW_WISE,
                    OBJECTIVE_SENSE_MINIMIZE,
                    m.offset,
                    m.col_cost.as_ptr(),
                    m.col_lower.as_ptr(),
                    m.col_upper.as_ptr(),
                    m.row_lower.as_ptr(),
                    m.row_upper.as_ptr(),
                    starts.as_ptr(),
                    m.row_index.as_ptr(),
                    m.row_value.as_ptr(),
                    integrality.as_ptr(),
                ),
                None => Highs_passLp(
                    self.ptr,
                    n_col,
                    n_row,
                    nnz,
                    MATRIX_FORMAT_ROW_WISE,
                    OBJECTIVE_SENSE_MINIMIZE,
                    m.offset,
                    m.col_cost.as_ptr(),
                    m.col_lower.as_ptr(),
                    m.col_upper.as_ptr(),
                    m.row_lower.as_ptr(),
                    m.row_upper.as_ptr(),
                    starts.as_ptr(),
                    m.row_index.as_ptr(),
                    m.row_value.as_ptr(),
                ),
            }
        };
        if status == STATUS_ERROR {
            Err("HiGHS rejected the model".into())
        } else {
            Ok(())
        }
    }

    /// Installs a starting basis. Returns false if HiGHS rejects it.
    pub fn set_basis(&mut self, basis: &Basis) -> bool {
        unsafe { Highs_setBasis(self.ptr, basis.cols.as_ptr(), basis.rows.as_ptr()) == STATUS_OK }
    }

    pub fn run(&mut self) -> Result<ModelStatus, String> {
        let status = unsafe { Highs_run(self.ptr) };
        if status == STATUS_ERROR {
            return Err(format!(
                "HiGHS run failed (model status {:?})",
                self.model_status()
            ));
        }
        Ok(self.model_status())
    }

    pub fn model_status(&self) -> ModelStatus {
        match unsafe { Highs_getModelStatus(self.ptr) } {
            MODEL_STATUS_OPTIMAL => ModelStatus::Optimal,
            MODEL_STATUS_INFEASIBLE => ModelStatus::Infeasible,
            MODEL_STATUS_UNBOUNDED | MODEL_STATUS_UNBOUNDED_OR_INFEASIBLE => ModelStatus::Unbounded,
            MODEL_STATUS_REACHED_TIME_LIMIT => ModelStatus::TimeLimit,
            MODEL_STATUS_REACHED_ITERATION_LIMIT => ModelStatus::IterationLimit,
            other => ModelStatus::Other(other),
        }
    }

    /// Primal column and row activities.
    pub fn solution(&self, n_cols: usize, n_rows: usize) -> (Vec<f64>, Vec<f64>) {
        let mut col_value = vec![0.0; n_cols];
        let mut col_dual = vec![0.0; n_cols];
        let mut row_value = vec![0.0; n_rows];
        let mut row_dual = vec![0.0; n_rows];
        unsafe {
            Highs_getSolution(
                self.ptr,
                col_value.as_mut_ptr(),
                col_dual.as_mut_ptr(),
                row_value.as_mut_ptr(),
                row_dual.as_mut_ptr(),
            );
        }
        (col_value, row_value)
    }

    pub fn basis(&self, n_cols: usize, n_rows: usize) -> Option<Basis> {
        let mut cols = vec![0 as c_int; n_cols];
        let mut rows = vec![0 as c_int; n_rows];
        let status = unsafe { Highs_getBasis(self.ptr, cols.as_mut_ptr(), rows.as_mut_ptr()) };
        (status == STATUS_OK).then_some(Basis { cols, rows })
    }

    pub fn objective_value(&self) -> f64 {
        unsafe { Highs_getObjectiveValue(self.ptr) }
    }

    pub fn info_i32(&self, name: &str) -> Option<i32> {
        let c = CString::new(name).expect("info name");
        let mut v: c_int = 0;
        let status = unsafe { Highs_getIntInfoValue(self.ptr, c.as_ptr(), &mut v) };
        (status == STATUS_OK).then_some(v)
    }

    pub fn info_f64(&self, name: &str) -> Option<f64> {
        let c = CString::new(name).expect("info name");
        let mut v = 0.0;
        let status = unsafe { Highs_getDoubleInfoValue(self.ptr, c.as_ptr(), &mut v) };
        (status == STATUS_OK).then_some(v)
    }
}

impl Default for Highs {
    fn default() -> Self {
        Self::new()
    }
}

impl Drop for Highs {
    fn drop(&mut self) {
        unsafe { Highs_destroy(self.ptr) }
    }
}
