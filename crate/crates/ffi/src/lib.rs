//! C interface to the `flowlut` engine.
//!
//! Models are opaque [`FlowlutModel`] handles created by
//! [`flowlut_model_new`] or [`flowlut_model_load`] and released with
//! [`flowlut_model_free`]. Every fallible call returns a [`FlowlutStatus`];
//! on failure [`flowlut_last_error`] describes the most recent error on the
//! calling thread. Panics never cross the boundary.
//!
//! The header `include/flowlut.h` is generated at build time.

use std::cell::RefCell;
use std::ffi::{c_char, CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::PathBuf;
use std::ptr;

use flowlut::imageio::ImageBuffer;
use flowlut::pipeline::{
    count_params, load_checkpoint, save_checkpoint, FlowLut, OptimizerState, PipelineConfig, Preset,
};
use flowlut::{Error, Tensor};

/// Result code of every fallible call.
#[repr(C)]
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum FlowlutStatus {
    Ok = 0,
    NullPointer = 1,
    /// A size, index or configuration value was rejected.
    InvalidArgument = 2,
    Io = 3,
    /// Malformed checkpoint, image or `.cube` data.
    Parse = 4,
    /// Training or numerical failure.
    Compute = 5,
    /// A Rust panic was caught; the handle should be discarded.
    Internal = 6,
}

#[repr(C)]
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum FlowlutPreset {
    Full = 0,
    Toy = 1,
}

/// Scalar parameter counts by component.
#[repr(C)]
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub struct FlowlutParamCounts {
    pub luts: u64,
    pub weight_net: u64,
    pub flow_net: u64,
    pub total: u64,
}

/// Opaque model handle.
pub struct FlowlutModel {
    model: FlowLut,
    state: OptimizerState,
}

thread_local! {
    static LAST_ERROR: RefCell<CString> = RefCell::new(CString::default());
}

fn set_last_error(msg: &str) {
    let c = CString::new(msg.replace('\0', " ")).unwrap_or_default();
    LAST_ERROR.with(|e| *e.borrow_mut() = c);
}

fn status_of(e: &Error) -> FlowlutStatus {
    match e {
        Error::Io(_) => FlowlutStatus::Io,
        Error::CubeParse { .. } | Error::ImageParse { .. } | Error::Checkpoint(_) | Error::Config { .. } => {
            FlowlutStatus::Parse
        }
        Error::Training(_) | Error::NonFiniteGradient { .. } | Error::NonFiniteLoss { .. } => FlowlutStatus::Compute,
        e if e.is_usage() => FlowlutStatus::InvalidArgument,
        _ => FlowlutStatus::Internal,
    }
}

/// Runs `f`, translating errors and panics into a status.
fn guard(f: impl FnOnce() -> Result<(), (FlowlutStatus, String)>) -> FlowlutStatus {
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(Ok(())) => {
            set_last_error("");
            FlowlutStatus::Ok
        }
        Ok(Err((status, msg))) => {
            set_last_error(&msg);
            status
        }
        Err(panic) => {
            let msg = panic
                .downcast_ref::<&str>()
                .map(|s| s.to_string())
                .or_else(|| panic.downcast_ref::<String>().cloned())
                .unwrap_or_else(|| "panic".into());
            set_last_error(&format!("internal error: {msg}"));
            FlowlutStatus::Internal
        }
    }
}

fn lib<T>(r: flowlut::Result<T>) -> Result<T, (FlowlutStatus, String)> {
    r.map_err(|e| (status_of(&e), e.to_string()))
}

fn null(what: &str) -> (FlowlutStatus, String) {
    (FlowlutStatus::NullPointer, format!("{what} is null"))
}

fn invalid(msg: String) -> (FlowlutStatus, String) {
    (FlowlutStatus::InvalidArgument, msg)
}

unsafe fn path_arg(p: *const c_char, what: &str) -> Result<PathBuf, (FlowlutStatus, String)> {
    if p.is_null() {
        return Err(null(what));
    }
    let s = CStr::from_ptr(p)
        .to_str()
        .map_err(|_| invalid(format!("{what} is not valid UTF-8")))?;
    Ok(PathBuf::from(s))
}

unsafe fn model_ref<'a>(m: *const FlowlutModel) -> Result<&'a FlowlutModel, (FlowlutStatus, String)> {
    m.as_ref().ok_or_else(|| null("model"))
}

fn pixel_count(width: u32, height: u32) -> Result<usize, (FlowlutStatus, String)> {
    if width == 0 || height == 0 {
        return Err(invalid(format!("image size {width}x{height} must be positive")));
    }
    (width as usize)
        .checked_mul(height as usize)
        .and_then(|n| n.checked_mul(3))
        .ok_or_else(|| invalid("image size overflows".into()))
}

/// Message for the most recent failed call on this thread, or an empty
/// string. The pointer stays valid until the next call on this thread.
#[no_mangle]
pub extern "C" fn flowlut_last_error() -> *const c_char {
    LAST_ERROR.with(|e| e.borrow().as_ptr())
}

/// Library version as a static NUL-terminated string.
#[no_mangle]
pub extern "C" fn flowlut_version() -> *const c_char {
    concat!(env!("CARGO_PKG_VERSION"), "\0").as_ptr().cast()
}

/// Builds a freshly initialized model. `num_luts` and `flow_steps` of 0 keep
/// the preset's values.
///
/// # Safety
/// `out` must be a valid pointer to writable storage for one handle.
#[no_mangle]
pub unsafe extern "C" fn flowlut_model_new(
    preset: FlowlutPreset,
    num_luts: u32,
    flow_steps: u32,
    seed: u64,
    out: *mut *mut FlowlutModel,
) -> FlowlutStatus {
    guard(|| {
        if out.is_null() {
            return Err(null("out"));
        }
        *out = ptr::null_mut();
        let mut cfg = PipelineConfig::preset(match preset {
            FlowlutPreset::Full => Preset::Full,
            FlowlutPreset::Toy => Preset::Toy,
        });
        if num_luts > 0 {
            cfg.num_luts = num_luts as usize;
        }
        if flow_steps > 0 {
            cfg.flow_steps = flow_steps as usize;
        }
        cfg.seed = seed;
        let model = lib(FlowLut::new(cfg))?;
        let state = OptimizerState::new(model.tensors());
        *out = Box::into_raw(Box::new(FlowlutModel { model, state }));
        Ok(())
    })
}

/// Loads a checkpoint file.
///
/// # Safety
/// `path` must be a NUL-terminated string and `out` a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn flowlut_model_load(path: *const c_char, out: *mut *mut FlowlutModel) -> FlowlutStatus {
    guard(|| {
        if out.is_null() {
            return Err(null("out"));
        }
        *out = ptr::null_mut();
        let path = path_arg(path, "path")?;
        let (model, state) = lib(load_checkpoint(path))?;
        *out = Box::into_raw(Box::new(FlowlutModel { model, state }));
        Ok(())
    })
}

/// Writes the model and its optimizer state as a checkpoint.
///
/// # Safety
/// `model` must be a live handle and `path` a NUL-terminated string.
#[no_mangle]
pub unsafe extern "C" fn flowlut_model_save(model: *const FlowlutModel, path: *const c_char) -> FlowlutStatus {
    guard(|| {
        let m = model_ref(model)?;
        let path = path_arg(path, "path")?;
        lib(save_checkpoint(&m.model, &m.state, path))
    })
}

/// Releases a handle. Null is ignored.
///
/// # Safety
/// `model` must be null or a handle not yet freed.
#[no_mangle]
pub unsafe extern "C" fn flowlut_model_free(model: *mut FlowlutModel) {
    if !model.is_null() {
        drop(Box::from_raw(model));
    }
}

/// # Safety
/// `model` must be a live handle and `out` a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn flowlut_param_counts(
    model: *const FlowlutModel,
    out: *mut FlowlutParamCounts,
) -> FlowlutStatus {
    guard(|| {
        let m = model_ref(model)?;
        let out = out.as_mut().ok_or_else(|| null("out"))?;
        let p = count_params(&m.model);
        *out = FlowlutParamCounts {
            luts: p.luts as u64,
            weight_net: p.weight_net as u64,
            flow_net: p.flow_net as u64,
            total: p.total as u64,
        };
        Ok(())
    })
}

/// Number of LUTs in the bank, or 0 for a null handle.
///
/// # Safety
/// `model` must be null or a live handle.
#[no_mangle]
pub unsafe extern "C" fn flowlut_num_luts(model: *const FlowlutModel) -> u32 {
    model.as_ref().map_or(0, |m| m.model.bank.len() as u32)
}

/// Enhances an interleaved 8-bit RGB image. `input` and `output` each hold
/// `3 * width * height` bytes and may be the same buffer.
///
/// # Safety
/// `model` must be a live handle; the buffers must be valid for that length.
#[no_mangle]
pub unsafe extern "C" fn flowlut_enhance_rgb8(
    model: *const FlowlutModel,
    width: u32,
    height: u32,
    input: *const u8,
    output: *mut u8,
) -> FlowlutStatus {
    guard(|| {
        let m = model_ref(model)?;
        let n = pixel_count(width, height)?;
        if input.is_null() {
            return Err(null("input"));
        }
        if output.is_null() {
            return Err(null("output"));
        }
        let pixels = std::slice::from_raw_parts(input, n).to_vec();
        let image = lib(ImageBuffer::new(width as usize, height as usize, pixels))?.to_tensor();
        let enhanced = lib(m.model.enhance(&image))?;
        let buf = lib(ImageBuffer::from_tensor(&enhanced))?;
        std::slice::from_raw_parts_mut(output, n).copy_from_slice(&buf.pixels);
        Ok(())
    })
}

/// Enhances a channel-planar `3 × height × width` float image in `[0, 1]`.
/// Output is clamped to `[0, 1]`; the buffers may alias.
///
/// # Safety
/// `model` must be a live handle; the buffers must hold `3 * width * height`
/// floats.
#[no_mangle]
pub unsafe extern "C" fn flowlut_enhance_planar_f32(
    model: *const FlowlutModel,
    width: u32,
    height: u32,
    input: *const f32,
    output: *mut f32,
) -> FlowlutStatus {
    guard(|| {
        let m = model_ref(model)?;
        let n = pixel_count(width, height)?;
        if input.is_null() {
            return Err(null("input"));
        }
        if output.is_null() {
            return Err(null("output"));
        }
        let data = std::slice::from_raw_parts(input, n).to_vec();
        let image = lib(Tensor::new([3, height as usize, width as usize], data))?;
        let enhanced = lib(m.model.enhance(&image))?;
        std::slice::from_raw_parts_mut(output, n).copy_from_slice(enhanced.data());
        Ok(())
    })
}

/// Writes LUT `index` of the bank as an Adobe `.cube` file.
///
/// # Safety
/// `model` must be a live handle and `path` a NUL-terminated string.
#[no_mangle]
pub unsafe extern "C" fn flowlut_export_cube(
    model: *const FlowlutModel,
    index: u32,
    path: *const c_char,
) -> FlowlutStatus {
    guard(|| {
        let m = model_ref(model)?;
        let path = path_arg(path, "path")?;
        let luts = m.model.bank.luts();
        let lut = luts
            .get(index as usize)
            .ok_or_else(|| invalid(format!("LUT index {index} out of range (bank has {})", luts.len())))?;
        lib(flowlut::lut::export_cube(lut, path))
    })
}
