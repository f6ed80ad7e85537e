use std::ffi::{CStr, CString};
use std::path::Path;
use std::ptr;

use flowlut_ffi::*;

fn new_model(preset: FlowlutPreset, num_luts: u32) -> *mut FlowlutModel {
    let mut m = ptr::null_mut();
    let status = unsafe { flowlut_model_new(preset, num_luts, 0, 7, &mut m) };
    assert_eq!(status, FlowlutStatus::Ok, "{}", last_error());
    assert!(!m.is_null());
    m
}

fn last_error() -> String {
    unsafe { CStr::from_ptr(flowlut_last_error()) }.to_string_lossy().into_owned()
}

fn cpath(p: &Path) -> CString {
    CString::new(p.to_str().unwrap()).unwrap()
}

#[test]
fn full_model_parameter_counts() {
    let m = new_model(FlowlutPreset::Full, 0);
    let mut counts = FlowlutParamCounts::default();
    assert_eq!(unsafe { flowlut_param_counts(m, &mut counts) }, FlowlutStatus::Ok);
    assert_eq!(
        counts,
        FlowlutParamCounts {
            luts: 862_488,
            weight_net: 1_179_336,
            flow_net: 42_179,
            total: 2_084_003,
        }
    );
    assert_eq!(unsafe { flowlut_num_luts(m) }, 8);
    unsafe { flowlut_model_free(m) };
}

#[test]
fn null_arguments_are_reported() {
    let status = unsafe { flowlut_param_counts(ptr::null(), ptr::null_mut()) };
    assert_eq!(status, FlowlutStatus::NullPointer);
    assert_eq!(last_error(), "model is null");
    assert_eq!(unsafe { flowlut_model_new(FlowlutPreset::Toy, 0, 0, 0, ptr::null_mut()) }, FlowlutStatus::NullPointer);
    unsafe { flowlut_model_free(ptr::null_mut()) };
    assert_eq!(unsafe { flowlut_num_luts(ptr::null()) }, 0);
}

#[test]
fn identity_model_keeps_rgb8_pixels() {
    // A single-LUT bank holds only the identity lattice, and both zero-init
    // heads leave blending and refinement neutral.
    let m = new_model(FlowlutPreset::Toy, 1);
    let (w, h) = (9u32, 7u32);
    let input: Vec<u8> = (0..3 * w * h).map(|i| (i * 37 % 256) as u8).collect();
    let mut output = vec![0u8; input.len()];
    let status = unsafe { flowlut_enhance_rgb8(m, w, h, input.as_ptr(), output.as_mut_ptr()) };
    assert_eq!(status, FlowlutStatus::Ok, "{}", last_error());
    assert_eq!(output, input);

    let planar: Vec<f32> = (0..3 * w * h).map(|i| (i as f32 * 0.013) % 1.0).collect();
    let mut out = vec![0f32; planar.len()];
    let status = unsafe { flowlut_enhance_planar_f32(m, w, h, planar.as_ptr(), out.as_mut_ptr()) };
    assert_eq!(status, FlowlutStatus::Ok);
    for (a, b) in planar.iter().zip(&out) {
        assert!((a - b).abs() <= 1e-6, "{a} vs {b}");
    }
    unsafe { flowlut_model_free(m) };
}

#[test]
fn bad_sizes_rejected() {
    let m = new_model(FlowlutPreset::Toy, 2);
    let buf = [0u8; 3];
    let mut out = [0u8; 3];
    let status = unsafe { flowlut_enhance_rgb8(m, 0, 1, buf.as_ptr(), out.as_mut_ptr()) };
    assert_eq!(status, FlowlutStatus::InvalidArgument);
    assert!(last_error().contains("must be positive"));
    let status = unsafe { flowlut_enhance_rgb8(m, 1, 1, ptr::null(), out.as_mut_ptr()) };
    assert_eq!(status, FlowlutStatus::NullPointer);
    unsafe { flowlut_model_free(m) };
}

#[test]
fn checkpoint_and_cube_files() {
    let dir = tempfile::tempdir().unwrap();
    let m = new_model(FlowlutPreset::Toy, 0);
    let ckpt = cpath(&dir.path().join("m.flut"));
    assert_eq!(unsafe { flowlut_model_save(m, ckpt.as_ptr()) }, FlowlutStatus::Ok);

    let mut loaded = ptr::null_mut();
    assert_eq!(unsafe { flowlut_model_load(ckpt.as_ptr(), &mut loaded) }, FlowlutStatus::Ok);
    let (w, h) = (12u32, 10u32);
    let input: Vec<u8> = (0..3 * w * h).map(|i| (i * 91 % 256) as u8).collect();
    let mut a = vec![0u8; input.len()];
    let mut b = vec![0u8; input.len()];
    unsafe {
        assert_eq!(flowlut_enhance_rgb8(m, w, h, input.as_ptr(), a.as_mut_ptr()), FlowlutStatus::Ok);
        assert_eq!(flowlut_enhance_rgb8(loaded, w, h, input.as_ptr(), b.as_mut_ptr()), FlowlutStatus::Ok);
    }
    assert_eq!(a, b);

    let cube = dir.path().join("lut7.cube");
    assert_eq!(unsafe { flowlut_export_cube(m, 7, cpath(&cube).as_ptr()) }, FlowlutStatus::Ok);
    let text = std::fs::read_to_string(&cube).unwrap();
    assert!(text.lines().any(|l| l.trim() == "LUT_3D_SIZE 33"));
    let status = unsafe { flowlut_export_cube(m, 8, cpath(&cube).as_ptr()) };
    assert_eq!(status, FlowlutStatus::InvalidArgument);
    assert!(last_error().contains("out of range"));

    let missing = cpath(&dir.path().join("missing.flut"));
    let mut none = ptr::null_mut();
    assert_eq!(unsafe { flowlut_model_load(missing.as_ptr(), &mut none) }, FlowlutStatus::Io);
    assert!(none.is_null());

    let garbage = dir.path().join("garbage.flut");
    std::fs::write(&garbage, b"not a checkpoint").unwrap();
    assert_eq!(unsafe { flowlut_model_load(cpath(&garbage).as_ptr(), &mut none) }, FlowlutStatus::Parse);
    assert!(last_error().contains("magic"), "{}", last_error());

    unsafe {
        flowlut_model_free(m);
        flowlut_model_free(loaded);
    }
}

#[test]
fn version_string() {
    let v = unsafe { CStr::from_ptr(flowlut_version()) }.to_str().unwrap();
    assert_eq!(v, env!("CARGO_PKG_VERSION"));
}

#[test]
fn generated_header_declares_every_entry_point() {
    let header = Path::new(env!("CARGO_MANIFEST_DIR")).join("include/flowlut.h");
    let text = std::fs::read_to_string(&header).unwrap();
    for name in [
        "flowlut_last_error",
        "flowlut_version",
        "flowlut_model_new",
        "flowlut_model_load",
        "flowlut_model_save",
        "flowlut_model_free",
        "flowlut_param_counts",
        "flowlut_num_luts",
        "flowlut_enhance_rgb8",
        "flowlut_enhance_planar_f32",
        "flowlut_export_cube",
        "FLOWLUT_STATUS_INVALID_ARGUMENT",
        "typedef struct FlowlutModel FlowlutModel",
    ] {
        assert!(text.contains(name), "header lacks {name}");
    }
    // The header must be valid C on its own.
    match std::process::Command::new("cc").args(["-fsyntax-only", "-x", "c"]).arg(&header).status() {
        Ok(status) => assert!(status.success(), "cc rejected the header"),
        Err(e) => eprintln!("no C compiler available ({e}); syntax check not run"),
    }
}
