//! C ABI for loading checkpoints, scoring feature rows, running stepping
//! sessions and advancing the zone integrator.
//!
//! Every fallible function returns an [`ApStatus`]; on failure the message is
//! available from [`ap_last_error`] on the same thread. Handles are opaque
//! and must be released with their `_free` function. Panics never cross the
//! boundary.

#![allow(clippy::missing_safety_doc)]

use std::cell::RefCell;
use std::collections::BTreeMap;
use std::ffi::{CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::Path;
use std::sync::Arc;

use aperture::cosim::{zone_step, Boundary, FeatureAssembler, ProtocolSession, ZoneParams, ZoneState};
use aperture::nn::{load_checkpoint, Checkpoint, Network};
use aperture::timeseries::{FeatureSchema, ImputationRules, SampleSet};
use aperture::Error;
use libc::{c_char, c_int, size_t};

/// Result code of every fallible call.
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ApStatus {
    Ok = 0,
    NullPointer = 1,
    InvalidUtf8 = 2,
    Io = 3,
    Parse = 4,
    Schema = 5,
    Dimension = 6,
    Invalid = 7,
    BufferTooSmall = 8,
    Panic = 9,
}

/// Loaded checkpoint.
pub struct ApModel {
    checkpoint: Checkpoint,
    network: Arc<Network>,
    schema_hash: CString,
}

/// Stepping session bound to one model: accepts protocol lines or named
/// channel values and keeps the history needed for lagged features.
pub struct ApSession {
    network: Arc<Network>,
    schema: FeatureSchema,
    assembler: FeatureAssembler,
    protocol: ProtocolSession,
    threshold: f64,
}

/// Zone model parameters; see [`ap_zone_params_default`].
#[repr(C)]
#[derive(Debug, Clone, Copy)]
pub struct ApZoneParams {
    pub capacitance: f64,
    pub ua: f64,
    pub ua_internal: f64,
    pub volume: f64,
    pub n_closed: f64,
    pub n_open: f64,
    pub neighbor_temp: f64,
    pub radiator_capacity: f64,
    pub radiator_setpoint: f64,
    pub radiator_band: f64,
    pub person_heat: f64,
    pub person_co2: f64,
    pub pc_gain: f64,
    pub outdoor_co2: f64,
    pub solar_aperture: f64,
}

#[repr(C)]
#[derive(Debug, Clone, Copy)]
pub struct ApZoneState {
    pub temp: f64,
    pub co2: f64,
    /// 0 closed, 1 open.
    pub window_open: c_int,
    pub timestamp: i64,
}

#[repr(C)]
#[derive(Debug, Clone, Copy)]
pub struct ApZoneBoundary {
    pub outdoor_temp: f64,
    pub occupants: f64,
    /// W
    pub solar_gain: f64,
}

impl From<ApZoneParams> for ZoneParams {
    fn from(p: ApZoneParams) -> Self {
        ZoneParams {
            capacitance: p.capacitance,
            ua: p.ua,
            ua_internal: p.ua_internal,
            volume: p.volume,
            n_closed: p.n_closed,
            n_open: p.n_open,
            neighbor_temp: p.neighbor_temp,
            radiator_capacity: p.radiator_capacity,
            radiator_setpoint: p.radiator_setpoint,
            radiator_band: p.radiator_band,
            person_heat: p.person_heat,
            person_co2: p.person_co2,
            pc_gain: p.pc_gain,
            outdoor_co2: p.outdoor_co2,
            solar_aperture: p.solar_aperture,
        }
    }
}

impl From<ZoneParams> for ApZoneParams {
    fn from(p: ZoneParams) -> Self {
        ApZoneParams {
            capacitance: p.capacitance,
            ua: p.ua,
            ua_internal: p.ua_internal,
            volume: p.volume,
            n_closed: p.n_closed,
            n_open: p.n_open,
            neighbor_temp: p.neighbor_temp,
            radiator_capacity: p.radiator_capacity,
            radiator_setpoint: p.radiator_setpoint,
            radiator_band: p.radiator_band,
            person_heat: p.person_heat,
            person_co2: p.person_co2,
            pc_gain: p.pc_gain,
            outdoor_co2: p.outdoor_co2,
            solar_aperture: p.solar_aperture,
        }
    }
}

thread_local! {
    static LAST_ERROR: RefCell<Option<CString>> = const { RefCell::new(None) };
}

fn set_error(message: String) {
    let c = CString::new(message.replace('\0', " ")).unwrap_or_default();
    LAST_ERROR.with(|e| *e.borrow_mut() = Some(c));
}

struct Failure(ApStatus, String);

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        let status = match &e {
            Error::Io { .. } => ApStatus::Io,
            Error::Parse { .. } | Error::Checkpoint(_) => ApStatus::Parse,
            Error::IncompatibleSchema { .. } | Error::MissingFeature(_) | Error::UnknownColumn { .. } => {
                ApStatus::Schema
            }
            Error::MissingColumn { .. } => ApStatus::Schema,
            Error::Dimension(_) => ApStatus::Dimension,
            _ => ApStatus::Invalid,
        };
        Failure(status, e.to_string())
    }
}

fn fail<T>(status: ApStatus, message: impl Into<String>) -> Result<T, Failure> {
    Err(Failure(status, message.into()))
}

/// Runs `f`, converting errors and panics into a status code.
fn guard(f: impl FnOnce() -> Result<(), Failure>) -> ApStatus {
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(Ok(())) => ApStatus::Ok,
        Ok(Err(Failure(status, message))) => {
            set_error(message);
            status
        }
        Err(payload) => {
            let message = payload
                .downcast_ref::<&str>()
                .map(|s| s.to_string())
                .or_else(|| payload.downcast_ref::<String>().cloned())
                .unwrap_or_else(|| "panic".into());
            set_error(format!("internal panic: {message}"));
            ApStatus::Panic
        }
    }
}

unsafe fn str_arg<'a>(ptr: *const c_char, what: &str) -> Result<&'a str, Failure> {
    if ptr.is_null() {
        return fail(ApStatus::NullPointer, format!("{what} is null"));
    }
    CStr::from_ptr(ptr)
        .to_str()
        .or_else(|_| fail(ApStatus::InvalidUtf8, format!("{what} is not valid UTF-8")))
}

unsafe fn ref_arg<'a, T>(ptr: *const T, what: &str) -> Result<&'a T, Failure> {
    ptr.as_ref().map_or_else(|| fail(ApStatus::NullPointer, format!("{what} is null")), Ok)
}

unsafe fn mut_arg<'a, T>(ptr: *mut T, what: &str) -> Result<&'a mut T, Failure> {
    ptr.as_mut().map_or_else(|| fail(ApStatus::NullPointer, format!("{what} is null")), Ok)
}

/// Copies `text` with a terminating NUL into `buf` of `len` bytes and stores
/// the required size (including the NUL) in `needed` when it is not null.
unsafe fn write_str(text: &str, buf: *mut c_char, len: size_t, needed: *mut size_t) -> Result<(), Failure> {
    let bytes = text.as_bytes();
    if let Some(n) = needed.as_mut() {
        *n = bytes.len() + 1;
    }
    if buf.is_null() || len < bytes.len() + 1 {
        return fail(
            ApStatus::BufferTooSmall,
            format!("buffer of {len} bytes, {} needed", bytes.len() + 1),
        );
    }
    std::ptr::copy_nonoverlapping(bytes.as_ptr(), buf as *mut u8, bytes.len());
    *buf.add(bytes.len()) = 0;
    Ok(())
}

/// Message of the last failed call on this thread, or null. The pointer
/// stays valid until the next failing call on the same thread.
#[no_mangle]
pub extern "C" fn ap_last_error() -> *const c_char {
    LAST_ERROR.with(|e| e.borrow().as_ref().map_or(std::ptr::null(), |c| c.as_ptr()))
}

/// Library version as a static NUL-terminated string.
#[no_mangle]
pub extern "C" fn ap_version() -> *const c_char {
    concat!(env!("CARGO_PKG_VERSION"), "\0").as_ptr() as *const c_char
}

/// Loads a checkpoint file into a new model handle.
#[no_mangle]
pub unsafe extern "C" fn ap_model_load(path: *const c_char, out: *mut *mut ApModel) -> ApStatus {
    guard(|| {
        let out = mut_arg(out, "out")?;
        *out = std::ptr::null_mut();
        let path = str_arg(path, "path")?;
        let checkpoint = load_checkpoint(Path::new(path))?;
        let schema_hash = CString::new(checkpoint.schema.hash()).unwrap_or_default();
        let network = Arc::new(checkpoint.network.clone());
        *out = Box::into_raw(Box::new(ApModel {
            checkpoint,
            network,
            schema_hash,
        }));
        Ok(())
    })
}

#[no_mangle]
pub unsafe extern "C" fn ap_model_free(model: *mut ApModel) {
    if !model.is_null() {
        drop(Box::from_raw(model));
    }
}

/// Number of raw input features the model expects per row.
#[no_mangle]
pub unsafe extern "C" fn ap_model_input_width(model: *const ApModel, out: *mut size_t) -> ApStatus {
    guard(|| {
        *mut_arg(out, "out")? = ref_arg(model, "model")?.checkpoint.schema.width();
        Ok(())
    })
}

/// Schema fingerprint used in the protocol's `HELLO`. Owned by the model.
#[no_mangle]
pub unsafe extern "C" fn ap_model_schema_hash(model: *const ApModel) -> *const c_char {
    model.as_ref().map_or(std::ptr::null(), |m| m.schema_hash.as_ptr())
}

/// Name of feature `index` in schema order (lagged features carry a
/// `_lag<minutes>` suffix).
#[no_mangle]
pub unsafe extern "C" fn ap_model_feature_name(
    model: *const ApModel,
    index: size_t,
    buf: *mut c_char,
    len: size_t,
    needed: *mut size_t,
) -> ApStatus {
    guard(|| {
        let keys = ref_arg(model, "model")?.checkpoint.schema.keys();
        let Some(name) = keys.get(index) else {
            return fail(ApStatus::Invalid, format!("feature index {index} out of range"));
        };
        write_str(name, buf, len, needed)
    })
}

/// Open probabilities for `rows` raw (unscaled) feature rows of
/// `width` values each, stored row-major in `features`.
#[no_mangle]
pub unsafe extern "C" fn ap_model_predict(
    model: *const ApModel,
    features: *const f64,
    rows: size_t,
    width: size_t,
    probabilities: *mut f64,
) -> ApStatus {
    guard(|| {
        let model = ref_arg(model, "model")?;
        let schema = &model.checkpoint.schema;
        if width != schema.width() {
            return fail(
                ApStatus::Dimension,
                format!("rows have {width} values, model expects {}", schema.width()),
            );
        }
        if rows == 0 {
            return Ok(());
        }
        if features.is_null() || probabilities.is_null() {
            return fail(ApStatus::NullPointer, "features or probabilities is null");
        }
        let raw = std::slice::from_raw_parts(features, rows * width);
        let out = std::slice::from_raw_parts_mut(probabilities, rows);
        let mut set = SampleSet::new(schema.keys());
        for row in raw.chunks(width) {
            set.push(&schema.scale_vector(row)?, false, 0, "");
        }
        out.copy_from_slice(&model.network.probabilities(&set)?);
        Ok(())
    })
}

/// Opens a stepping session. `impute_toml` may be null to use the built-in
/// fill-ins for channels a simulator does not provide.
#[no_mangle]
pub unsafe extern "C" fn ap_session_new(
    model: *const ApModel,
    impute_toml: *const c_char,
    utc_offset_minutes: c_int,
    threshold: f64,
    out: *mut *mut ApSession,
) -> ApStatus {
    guard(|| {
        let out = mut_arg(out, "out")?;
        *out = std::ptr::null_mut();
        let model = ref_arg(model, "model")?;
        if !(0.0..=1.0).contains(&threshold) {
            return fail(ApStatus::Invalid, "threshold must be in [0, 1]");
        }
        let rules = if impute_toml.is_null() {
            ImputationRules::sparse_building_defaults()
        } else {
            ImputationRules::from_toml(str_arg(impute_toml, "impute_toml")?)?
        };
        let schema = model.checkpoint.schema.clone();
        let assembler = FeatureAssembler::new(schema.clone(), rules.clone(), utc_offset_minutes)?;
        let protocol = ProtocolSession::new(model.network.clone(), schema.clone(), rules, utc_offset_minutes)?;
        *out = Box::into_raw(Box::new(ApSession {
            network: model.network.clone(),
            schema,
            assembler,
            protocol,
            threshold,
        }));
        Ok(())
    })
}

#[no_mangle]
pub unsafe extern "C" fn ap_session_free(session: *mut ApSession) {
    if !session.is_null() {
        drop(Box::from_raw(session));
    }
}

/// Answers one protocol line (`HELLO`, `STEP`, `BYE`). Protocol errors are
/// replies (`ERR ...`), not failures.
#[no_mangle]
pub unsafe extern "C" fn ap_session_handle_line(
    session: *mut ApSession,
    line: *const c_char,
    reply: *mut c_char,
    len: size_t,
    needed: *mut size_t,
) -> ApStatus {
    guard(|| {
        let session = mut_arg(session, "session")?;
        let line = str_arg(line, "line")?;
        let answer = session.protocol.handle_line(line);
        write_str(&answer, reply, len, needed)
    })
}

/// One structured step: `count` named channel values at `timestamp`
/// (Unix seconds). Writes the window decision (0 or 1) and its probability.
#[no_mangle]
pub unsafe extern "C" fn ap_session_step(
    session: *mut ApSession,
    timestamp: i64,
    names: *const *const c_char,
    values: *const f64,
    count: size_t,
    state: *mut c_int,
    probability: *mut f64,
) -> ApStatus {
    guard(|| {
        let session = mut_arg(session, "session")?;
        let state = mut_arg(state, "state")?;
        let probability = mut_arg(probability, "probability")?;
        let mut supplied = BTreeMap::new();
        if count > 0 {
            if names.is_null() || values.is_null() {
                return fail(ApStatus::NullPointer, "names or values is null");
            }
            let names = std::slice::from_raw_parts(names, count);
            let values = std::slice::from_raw_parts(values, count);
            for (&n, &v) in names.iter().zip(values) {
                let name = str_arg(n, "channel name")?;
                if !session.assembler.knows(name) {
                    return fail(ApStatus::Schema, format!("unknown feature `{name}`"));
                }
                supplied.insert(name.to_string(), v);
            }
        }
        let raw = session.assembler.assemble(timestamp, &supplied)?;
        let mut set = SampleSet::new(session.schema.keys());
        set.push(&session.schema.scale_vector(&raw)?, false, timestamp, "");
        let p = session.network.probabilities(&set)?[0];
        *state = c_int::from(p >= session.threshold);
        *probability = p;
        Ok(())
    })
}

/// Clears the lag history of the structured stepping interface.
#[no_mangle]
pub unsafe extern "C" fn ap_session_reset(session: *mut ApSession) -> ApStatus {
    guard(|| {
        mut_arg(session, "session")?.assembler.reset();
        Ok(())
    })
}

/// Fills `out` with the default zone parameters.
#[no_mangle]
pub unsafe extern "C" fn ap_zone_params_default(out: *mut ApZoneParams) -> ApStatus {
    guard(|| {
        *mut_arg(out, "out")? = ZoneParams::default().into();
        Ok(())
    })
}

/// Advances `state` by `dt` seconds under constant boundary conditions.
#[no_mangle]
pub unsafe extern "C" fn ap_zone_step(
    params: *const ApZoneParams,
    state: *mut ApZoneState,
    boundary: *const ApZoneBoundary,
    dt: f64,
) -> ApStatus {
    guard(|| {
        let params: ZoneParams = (*ref_arg(params, "params")?).into();
        let state = mut_arg(state, "state")?;
        let b = ref_arg(boundary, "boundary")?;
        let current = ZoneState {
            temp: state.temp,
            co2: state.co2,
            window_open: state.window_open != 0,
            timestamp: state.timestamp,
        };
        let next = zone_step(
            &current,
            &params,
            &Boundary {
                outdoor_temp: b.outdoor_temp,
                occupants: b.occupants,
                solar_gain: b.solar_gain,
            },
            dt,
        )?;
        state.temp = next.temp;
        state.co2 = next.co2;
        state.timestamp = next.timestamp;
        Ok(())
    })
}
