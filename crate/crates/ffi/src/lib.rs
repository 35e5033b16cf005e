//! C ABI over the motionseries models.
//!
//! Models are opaque handles created by `*_fit` / `*_load` and released with
//! the matching `*_free`. Every fallible call returns an [`MsStatus`]; on
//! failure [`ms_last_error`] describes the cause for the calling thread.
//! Buffers are caller-owned and sized by the caller; calls that fill a buffer
//! take its capacity and fail with `MS_STATUS_INVALID_ARGUMENT` when it is too
//! small.

#![allow(clippy::missing_safety_doc)]

use std::cell::RefCell;
use std::ffi::{c_char, CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::PathBuf;
use std::ptr;

use ndarray::Array2;

use motionseries::cnn1d::{self, NetworkSpec, NetworkState};
use motionseries::corpus::DescriptorSequence;
use motionseries::flowfield::{self, Frame};
use motionseries::pca::PcaModel;
use motionseries::svm::{self, KernelParams, SvmConfig, SvmModel};

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum MsStatus {
    Ok = 0,
    InvalidArgument = 1,
    DataError = 2,
    NotConverged = 3,
    NullPointer = 4,
    Panic = 5,
}

pub struct MsPca {
    model: PcaModel,
}

pub struct MsNetwork {
    spec: NetworkSpec,
    state: NetworkState,
}

pub struct MsSvm {
    model: SvmModel,
    labels: Vec<CString>,
}

enum Failure {
    Core(motionseries::Error),
    Null(&'static str),
    Invalid(String),
}

impl From<motionseries::Error> for Failure {
    fn from(e: motionseries::Error) -> Self {
        Failure::Core(e)
    }
}

thread_local! {
    static LAST_ERROR: RefCell<CString> = RefCell::new(CString::default());
}

fn set_last_error(msg: &str) {
    let c = CString::new(msg.replace('\0', " ")).expect("nul bytes removed");
    LAST_ERROR.with(|e| *e.borrow_mut() = c);
}

fn guard(f: impl FnOnce() -> Result<(), Failure>) -> MsStatus {
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(Ok(())) => {
            set_last_error("");
            MsStatus::Ok
        }
        Ok(Err(Failure::Core(e))) => {
            set_last_error(&e.to_string());
            match e.exit_code() {
                1 => MsStatus::InvalidArgument,
                3 => MsStatus::NotConverged,
                _ => MsStatus::DataError,
            }
        }
        Ok(Err(Failure::Null(what))) => {
            set_last_error(&format!("null pointer: {what}"));
            MsStatus::NullPointer
        }
        Ok(Err(Failure::Invalid(msg))) => {
            set_last_error(&msg);
            MsStatus::InvalidArgument
        }
        Err(_) => {
            set_last_error("internal panic");
            MsStatus::Panic
        }
    }
}

unsafe fn slice<'a, T>(p: *const T, len: usize, what: &'static str) -> Result<&'a [T], Failure> {
    if len == 0 {
        return Ok(&[]);
    }
    if p.is_null() {
        return Err(Failure::Null(what));
    }
    Ok(std::slice::from_raw_parts(p, len))
}

unsafe fn slice_mut<'a, T>(p: *mut T, len: usize, what: &'static str) -> Result<&'a mut [T], Failure> {
    if len == 0 {
        return Ok(&mut []);
    }
    if p.is_null() {
        return Err(Failure::Null(what));
    }
    Ok(std::slice::from_raw_parts_mut(p, len))
}

unsafe fn handle<'a, T>(p: *const T, what: &'static str) -> Result<&'a T, Failure> {
    p.as_ref().ok_or(Failure::Null(what))
}

unsafe fn path(p: *const c_char) -> Result<PathBuf, Failure> {
    if p.is_null() {
        return Err(Failure::Null("path"));
    }
    let s = CStr::from_ptr(p).to_str().map_err(|_| Failure::Invalid("path is not UTF-8".into()))?;
    Ok(PathBuf::from(s))
}

fn copy_out(src: &[f64], dst: &mut [f64]) -> Result<(), Failure> {
    if dst.len() < src.len() {
        return Err(Failure::Invalid(format!("output buffer holds {} values, need {}", dst.len(), src.len())));
    }
    dst[..src.len()].copy_from_slice(src);
    Ok(())
}

unsafe fn matrix(p: *const f64, rows: usize, cols: usize, what: &'static str) -> Result<Array2<f64>, Failure> {
    let len = rows.checked_mul(cols).ok_or_else(|| Failure::Invalid(format!("{what}: size overflow")))?;
    let data = slice(p, len, what)?;
    Array2::from_shape_vec((rows, cols), data.to_vec()).map_err(|e| Failure::Invalid(e.to_string()))
}

fn put<T>(out: *mut *mut T, value: T) -> Result<(), Failure> {
    if out.is_null() {
        return Err(Failure::Null("out"));
    }
    unsafe { *out = Box::into_raw(Box::new(value)) };
    Ok(())
}

/// Message for the last failed call on this thread; empty after a success.
/// The pointer stays valid until the next call on the same thread.
#[no_mangle]
pub extern "C" fn ms_last_error() -> *const c_char {
    LAST_ERROR.with(|e| e.borrow().as_ptr())
}

/// Number of values in a flow descriptor for a `grid × grid` layout with `bins` orientations.
#[no_mangle]
pub extern "C" fn ms_descriptor_len(grid: usize, bins: usize) -> usize {
    flowfield::descriptor_len(grid, bins)
}

/// Estimates optical flow between two `height × width` row-major frames
/// (intensities in [0, 1]) and writes its descriptor to `out`.
#[no_mangle]
pub unsafe extern "C" fn ms_flow_describe(
    prev: *const f64,
    next: *const f64,
    width: usize,
    height: usize,
    alpha: f64,
    iterations: usize,
    grid: usize,
    bins: usize,
    out: *mut f64,
    out_len: usize,
) -> MsStatus {
    guard(|| {
        let a = Frame::new(matrix(prev, height, width, "prev")?)?;
        let b = Frame::new(matrix(next, height, width, "next")?)?;
        let flow = flowfield::estimate_flow(&a, &b, alpha, iterations)?;
        let d = flowfield::describe_flow(&flow, grid, bins)?;
        copy_out(&d.values, slice_mut(out, out_len, "out")?)
    })
}

/// `exp(−gamma · Σ (x−y)² / (x+y+ε))` over nonnegative vectors of length `len`.
#[no_mangle]
pub unsafe extern "C" fn ms_chi2_kernel(x: *const f64, y: *const f64, len: usize, gamma: f64, out: *mut f64) -> MsStatus {
    guard(|| {
        let (x, y) = (slice(x, len, "x")?, slice(y, len, "y")?);
        let k = svm::chi2_kernel(x, y, &KernelParams::new(gamma)?)?;
        *out.as_mut().ok_or(Failure::Null("out"))? = k;
        Ok(())
    })
}

/// Fits PCA on `rows × cols` row-major samples, keeping the fewest
/// components whose variance share reaches `pov`.
#[no_mangle]
pub unsafe extern "C" fn ms_pca_fit(samples: *const f64, rows: usize, cols: usize, pov: f64, out: *mut *mut MsPca) -> MsStatus {
    guard(|| {
        let model = PcaModel::fit(&matrix(samples, rows, cols, "samples")?, pov)?;
        put(out, MsPca { model })
    })
}

#[no_mangle]
pub unsafe extern "C" fn ms_pca_load(file: *const c_char, out: *mut *mut MsPca) -> MsStatus {
    guard(|| put(out, MsPca { model: PcaModel::load(&path(file)?)? }))
}

#[no_mangle]
pub unsafe extern "C" fn ms_pca_save(pca: *const MsPca, file: *const c_char) -> MsStatus {
    guard(|| Ok(handle(pca, "pca")?.model.save(&path(file)?)?))
}

#[no_mangle]
pub unsafe extern "C" fn ms_pca_input_dim(pca: *const MsPca) -> usize {
    pca.as_ref().map_or(0, |p| p.model.input_dim())
}

#[no_mangle]
pub unsafe extern "C" fn ms_pca_retained(pca: *const MsPca) -> usize {
    pca.as_ref().map_or(0, |p| p.model.retained())
}

/// Projects a `frames × input_dim` row-major sequence to `retained × frames`
/// (channel-major) values in `out`.
#[no_mangle]
pub unsafe extern "C" fn ms_pca_transform(
    pca: *const MsPca,
    sequence: *const f32,
    frames: usize,
    dim: usize,
    out: *mut f64,
    out_len: usize,
) -> MsStatus {
    guard(|| {
        let pca = handle(pca, "pca")?;
        let len = frames.checked_mul(dim).ok_or_else(|| Failure::Invalid("sequence size overflow".into()))?;
        let data = Array2::from_shape_vec((frames, dim), slice(sequence, len, "sequence")?.to_vec()).map_err(|e| Failure::Invalid(e.to_string()))?;
        let series = pca.model.transform(&DescriptorSequence::new("ffi", data)?)?;
        copy_out(series.data.as_slice().expect("standard layout"), slice_mut(out, out_len, "out")?)
    })
}

#[no_mangle]
pub unsafe extern "C" fn ms_pca_free(pca: *mut MsPca) {
    if !pca.is_null() {
        drop(Box::from_raw(pca));
    }
}

/// Loads a `CNN1` model file.
#[no_mangle]
pub unsafe extern "C" fn ms_network_load(file: *const c_char, out: *mut *mut MsNetwork) -> MsStatus {
    guard(|| {
        let (spec, state) = NetworkState::load(&path(file)?)?;
        put(out, MsNetwork { spec, state })
    })
}

#[no_mangle]
pub unsafe extern "C" fn ms_network_input_channels(net: *const MsNetwork) -> usize {
    net.as_ref().map_or(0, |n| n.spec.input_channels())
}

#[no_mangle]
pub unsafe extern "C" fn ms_network_input_length(net: *const MsNetwork) -> usize {
    net.as_ref().map_or(0, |n| n.spec.input_length())
}

#[no_mangle]
pub unsafe extern "C" fn ms_network_feature_len(net: *const MsNetwork) -> usize {
    net.as_ref().map_or(0, |n| n.spec.feature_len())
}

#[no_mangle]
pub unsafe extern "C" fn ms_network_classes(net: *const MsNetwork) -> usize {
    net.as_ref().map_or(0, |n| n.spec.classes())
}

unsafe fn network_input(net: &MsNetwork, input: *const f64, channels: usize, length: usize) -> Result<Array2<f64>, Failure> {
    matrix(input, channels, length, "input")
        .and_then(|m| if m.dim() == (net.spec.input_channels(), net.spec.input_length()) { Ok(m) } else { Err(Failure::Invalid(format!("input is {channels}x{length}, network expects {}x{}", net.spec.input_channels(), net.spec.input_length()))) })
}

/// Penultimate-layer features of a `channels × length` channel-major input.
#[no_mangle]
pub unsafe extern "C" fn ms_network_extract(
    net: *const MsNetwork,
    input: *const f64,
    channels: usize,
    length: usize,
    out: *mut f64,
    out_len: usize,
) -> MsStatus {
    guard(|| {
        let net = handle(net, "network")?;
        let x = network_input(net, input, channels, length)?;
        let f = cnn1d::extract_features(&net.spec, &net.state, &x)?;
        copy_out(&f, slice_mut(out, out_len, "out")?)
    })
}

/// Class probabilities of a `channels × length` channel-major input.
#[no_mangle]
pub unsafe extern "C" fn ms_network_predict_proba(
    net: *const MsNetwork,
    input: *const f64,
    channels: usize,
    length: usize,
    out: *mut f64,
    out_len: usize,
) -> MsStatus {
    guard(|| {
        let net = handle(net, "network")?;
        let x = network_input(net, input, channels, length)?;
        let p = cnn1d::predict_proba(&net.spec, &net.state, &x)?;
        copy_out(p.as_slice().expect("contiguous"), slice_mut(out, out_len, "out")?)
    })
}

#[no_mangle]
pub unsafe extern "C" fn ms_network_free(net: *mut MsNetwork) {
    if !net.is_null() {
        drop(Box::from_raw(net));
    }
}

fn svm_handle(model: SvmModel) -> Result<MsSvm, Failure> {
    let labels = model
        .labels
        .iter()
        .map(|l| CString::new(l.as_str()).map_err(|_| Failure::Invalid("label contains a nul byte".into())))
        .collect::<Result<_, _>>()?;
    Ok(MsSvm { model, labels })
}

/// Fits the one-vs-rest SVM on `rows × dim` row-major nonnegative features
/// with one C-string label per row. A `gamma` of zero or less selects the
/// data-driven default.
#[no_mangle]
pub unsafe extern "C" fn ms_svm_fit(
    features: *const f64,
    rows: usize,
    dim: usize,
    labels: *const *const c_char,
    c_box: f64,
    gamma: f64,
    tol: f64,
    out: *mut *mut MsSvm,
) -> MsStatus {
    guard(|| {
        let m = matrix(features, rows, dim, "features")?;
        let feats: Vec<Vec<f64>> = m.rows().into_iter().map(|r| r.to_vec()).collect();
        let names = slice(labels, rows, "labels")?
            .iter()
            .map(|&p| {
                if p.is_null() {
                    return Err(Failure::Null("label"));
                }
                CStr::from_ptr(p).to_str().map(str::to_owned).map_err(|_| Failure::Invalid("label is not UTF-8".into()))
            })
            .collect::<Result<Vec<_>, _>>()?;
        let gamma = if gamma > 0.0 { gamma } else { svm::default_gamma(&feats)? };
        let model = SvmModel::fit(&feats, &names, KernelParams::new(gamma)?, SvmConfig { c_box, tol })?;
        put(out, svm_handle(model)?)
    })
}

#[no_mangle]
pub unsafe extern "C" fn ms_svm_load(file: *const c_char, out: *mut *mut MsSvm) -> MsStatus {
    guard(|| put(out, svm_handle(SvmModel::load(&path(file)?)?)?))
}

#[no_mangle]
pub unsafe extern "C" fn ms_svm_save(model: *const MsSvm, file: *const c_char) -> MsStatus {
    guard(|| Ok(handle(model, "svm")?.model.save(&path(file)?)?))
}

#[no_mangle]
pub unsafe extern "C" fn ms_svm_classes(model: *const MsSvm) -> usize {
    model.as_ref().map_or(0, |m| m.labels.len())
}

/// Label of class `index`, owned by the handle; null when out of range.
#[no_mangle]
pub unsafe extern "C" fn ms_svm_label(model: *const MsSvm, index: usize) -> *const c_char {
    model.as_ref().and_then(|m| m.labels.get(index)).map_or(ptr::null(), |l| l.as_ptr())
}

/// Classifies one feature vector. Writes the winning class index and, when
/// `decision_values` is non-null, one decision value per class.
#[no_mangle]
pub unsafe extern "C" fn ms_svm_predict(
    model: *const MsSvm,
    features: *const f64,
    dim: usize,
    class_index: *mut usize,
    decision_values: *mut f64,
    values_len: usize,
) -> MsStatus {
    guard(|| {
        let model = handle(model, "svm")?;
        let p = model.model.predict(slice(features, dim, "features")?)?;
        *class_index.as_mut().ok_or(Failure::Null("class_index"))? = p.class_index;
        if !decision_values.is_null() {
            copy_out(&p.decision_values, slice_mut(decision_values, values_len, "decision_values")?)?;
        }
        Ok(())
    })
}

#[no_mangle]
pub unsafe extern "C" fn ms_svm_free(model: *mut MsSvm) {
    if !model.is_null() {
        drop(Box::from_raw(model));
    }
}
