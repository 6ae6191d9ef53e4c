use std::collections::BTreeMap;
use std::io::{BufRead, Write};
use std::net::{TcpListener, ToSocketAddrs};
use std::sync::Arc;

use super::features::FeatureAssembler;
use super::run::{ModelPolicy, WindowPolicy};
use crate::error::{Error, Result};
use crate::nn::Network;
use crate::timeseries::{FeatureSchema, ImputationRules};

/// One client conversation of the stepping protocol:
///
/// ```text
/// HELLO <schema hash>        -> READY <feature names>
/// STEP <name>=<value> ...    -> STATE <0|1> PROB <p>
/// BYE                        -> BYE
/// ```
///
/// Errors are answered with `ERR <reason>`.
pub struct ProtocolSession {
    network: Arc<Network>,
    assembler: FeatureAssembler,
    threshold: f64,
    ready: bool,
    closed: bool,
    steps: i64,
}

impl ProtocolSession {
    pub fn new(network: Arc<Network>, schema: FeatureSchema, rules: ImputationRules, utc_offset_minutes: i32) -> Result<Self> {
        if schema.width() != network.input_width() {
            return Err(Error::Dimension("schema width does not match network".into()));
        }
        Ok(Self {
            network,
            assembler: FeatureAssembler::new(schema, rules, utc_offset_minutes)?,
            threshold: 0.5,
            ready: false,
            closed: false,
            steps: 0,
        })
    }

    pub fn is_closed(&self) -> bool {
        self.closed
    }

    fn input_names(&self) -> Vec<String> {
        self.assembler
            .schema()
            .features
            .iter()
            .filter(|f| !f.is_lagged())
            .map(|f| f.name.clone())
            .collect()
    }

    /// Answers one request line.
    pub fn handle_line(&mut self, line: &str) -> String {
        let line = line.trim();
        let (verb, rest) = line.split_once(char::is_whitespace).unwrap_or((line, ""));
        match verb {
            "HELLO" => {
                let hash = rest.trim();
                if hash.is_empty() || hash.contains(char::is_whitespace) {
                    return "ERR parse".into();
                }
                if hash != self.assembler.schema().hash() {
                    return "ERR schema-mismatch".into();
                }
                self.ready = true;
                self.assembler.reset();
                self.steps = 0;
                format!("READY {}", self.input_names().join(" "))
            }
            "STEP" if !self.ready => "ERR no-session".into(),
            "STEP" => self.step(rest),
            "BYE" if rest.trim().is_empty() => {
                self.closed = true;
                "BYE".into()
            }
            _ => "ERR parse".into(),
        }
    }

    fn step(&mut self, args: &str) -> String {
        let mut supplied = BTreeMap::new();
        for token in args.split_whitespace() {
            let Some((name, value)) = token.split_once('=') else {
                return "ERR parse".into();
            };
            let Ok(value) = value.parse::<f64>() else {
                return "ERR parse".into();
            };
            if !self.assembler.knows(name) {
                return format!("ERR unknown-feature {name}");
            }
            supplied.insert(name.to_string(), value);
        }
        let timestamp = match supplied.get("timestamp") {
            Some(t) => *t as i64,
            None => self.steps * 600,
        };
        self.steps += 1;
        let raw = match self.assembler.assemble(timestamp, &supplied) {
            Ok(raw) => raw,
            Err(Error::MissingFeature(name)) => return format!("ERR missing-feature {name}"),
            Err(_) => return "ERR parse".into(),
        };
        let schema = self.assembler.schema().clone();
        let mut policy = ModelPolicy {
            network: &self.network,
            threshold: self.threshold,
        };
        match policy.decide(&schema, &raw) {
            Ok((state, p)) => format!("STATE {} PROB {}", state as u8, p),
            Err(_) => "ERR parse".into(),
        }
    }
}

/// Runs one session over a line stream until `BYE` or end of input.
pub fn serve_stream<R: BufRead, W: Write>(session: &mut ProtocolSession, reader: R, mut writer: W) -> std::io::Result<()> {
    for line in reader.lines() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        writeln!(writer, "{}", session.handle_line(&line))?;
        writer.flush()?;
        if session.is_closed() {
            break;
        }
    }
    Ok(())
}

/// Accepts TCP connections forever, one thread and one isolated session per
/// connection.
pub fn serve_tcp<A: ToSocketAddrs>(
    addr: A,
    network: Arc<Network>,
    schema: FeatureSchema,
    rules: ImputationRules,
    utc_offset_minutes: i32,
) -> Result<()> {
    let listener = TcpListener::bind(addr).map_err(|e| Error::io("<tcp>", e))?;
    log::info!("listening on {:?}", listener.local_addr().ok());
    for stream in listener.incoming() {
        let stream = match stream {
            Ok(s) => s,
            Err(e) => {
                log::error!("accept failed: {e}");
                continue;
            }
        };
        let mut session = ProtocolSession::new(network.clone(), schema.clone(), rules.clone(), utc_offset_minutes)?;
        std::thread::spawn(move || {
            let reader = match stream.try_clone() {
                Ok(s) => std::io::BufReader::new(s),
                Err(e) => {
                    log::error!("connection setup failed: {e}");
                    return;
                }
            };
            if let Err(e) = serve_stream(&mut session, reader, stream) {
                log::debug!("connection closed: {e}");
            }
        });
    }
    Ok(())
}
