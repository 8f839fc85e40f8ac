use std::io::Read;
use std::path::Path;
use std::sync::mpsc;
use std::time::Instant;

use robomesh_core::geometry::Twist;
use robomesh_core::teleop::{Key, KeyTeleop, Script, TeleopLimits};
use robomesh_msg::types::Twist2D;
use robomesh_net::{Flow, Node, NodeOptions, RuntimeError};

use super::convert::{twist_from_msg, twist_to_msg};
use super::Running;

pub const UI_CHANNEL: &str = "__ui/teleop";
pub const RATE_HZ: f64 = 20.0;

pub enum TeleopSource {
    /// Timed `(t, v, w)` rows; no dead-man.
    Script(Script<f64>),
    /// Raw-mode terminal keys plus bridge input.
    Keyboard,
    /// Bridge input only.
    Bridge,
}

pub struct TeleopConfig {
    pub name: String,
    /// Output channel is `<name>/<suffix>`.
    pub suffix: String,
    pub source: TeleopSource,
    pub limits: TeleopLimits<f64>,
}

impl TeleopConfig {
    pub fn new(source: TeleopSource) -> Self {
        Self {
            name: "teleop".into(),
            suffix: "twist".into(),
            source,
            limits: TeleopLimits::default(),
        }
    }
}

/// Parses `t,v,w` rows; a non-numeric first row is taken as a header.
pub fn parse_script(text: &str) -> Result<Script<f64>, String> {
    let mut rdr = csv::ReaderBuilder::new().has_headers(false).trim(csv::Trim::All).comment(Some(b'#')).from_reader(text.as_bytes());
    let mut rows = Vec::new();
    for (i, rec) in rdr.records().enumerate() {
        let rec = rec.map_err(|e| e.to_string())?;
        if rec.len() != 3 {
            return Err(format!("row {}: expected t,v,w", i + 1));
        }
        let nums: Result<Vec<f64>, _> = rec.iter().map(str::parse::<f64>).collect();
        match nums {
            Ok(n) => rows.push((n[0], Twist::new(n[1], n[2]))),
            Err(_) if i == 0 => continue,
            Err(e) => return Err(format!("row {}: {e}", i + 1)),
        }
    }
    Ok(Script::new(rows))
}

pub fn load_script(path: impl AsRef<Path>) -> Result<Script<f64>, String> {
    let text = std::fs::read_to_string(path.as_ref()).map_err(|e| format!("{}: {e}", path.as_ref().display()))?;
    parse_script(&text)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum KeyInput {
    Key(Key),
    Quit,
}

/// Decodes terminal bytes: WASD, arrow escape sequences, space, q / Ctrl-C.
pub fn parse_keys(bytes: &[u8]) -> Vec<KeyInput> {
    let mut out = Vec::new();
    let mut i = 0;
    while i < bytes.len() {
        let b = bytes[i];
        if b == 0x1b && i + 2 < bytes.len() && bytes[i + 1] == b'[' {
            match bytes[i + 2] {
                b'A' => out.push(KeyInput::Key(Key::Forward)),
                b'B' => out.push(KeyInput::Key(Key::Backward)),
                b'C' => out.push(KeyInput::Key(Key::Right)),
                b'D' => out.push(KeyInput::Key(Key::Left)),
                _ => {}
            }
            i += 3;
            continue;
        }
        match b.to_ascii_lowercase() {
            b'w' => out.push(KeyInput::Key(Key::Forward)),
            b's' => out.push(KeyInput::Key(Key::Backward)),
            b'a' => out.push(KeyInput::Key(Key::Left)),
            b'd' => out.push(KeyInput::Key(Key::Right)),
            b' ' => out.push(KeyInput::Key(Key::Stop)),
            b'q' | 0x03 => out.push(KeyInput::Quit),
            _ => {}
        }
        i += 1;
    }
    out
}

/// Puts the terminal in raw mode until dropped.
struct RawTerminal {
    saved: libc::termios,
}

impl RawTerminal {
    fn enable() -> Option<Self> {
        // SAFETY: termios calls on stdin with a zeroed, then filled, struct.
        unsafe {
            if libc::isatty(0) == 0 {
                return None;
            }
            let mut t: libc::termios = std::mem::zeroed();
            if libc::tcgetattr(0, &mut t) != 0 {
                return None;
            }
            let saved = t;
            libc::cfmakeraw(&mut t);
            t.c_oflag |= libc::OPOST;
            if libc::tcsetattr(0, libc::TCSANOW, &t) != 0 {
                return None;
            }
            Some(Self { saved })
        }
    }
}

impl Drop for RawTerminal {
    fn drop(&mut self) {
        // SAFETY: restores the attributes read in `enable`.
        unsafe {
            libc::tcsetattr(0, libc::TCSANOW, &self.saved);
        }
    }
}

pub fn start_teleop(options: &NodeOptions, config: TeleopConfig) -> Result<Running, RuntimeError> {
    let node = Node::create(&config.name, options)?;
    let out = node.create_publisher::<Twist2D>(&config.suffix)?;
    let ui = node.create_subscriber::<Twist2D>(UI_CHANNEL, 16)?;
    let mut keys = KeyTeleop::new(config.limits);
    let start = Instant::now();
    let (mut script, key_rx) = match config.source {
        TeleopSource::Script(s) => (Some(s), None),
        TeleopSource::Keyboard => {
            let (tx, rx) = mpsc::channel();
            let token = node.shutdown_token();
            std::thread::Builder::new()
                .name("teleop-keys".into())
                .spawn(move || {
                    let _raw = RawTerminal::enable();
                    let mut buf = [0u8; 16];
                    let mut stdin = std::io::stdin();
                    while let Ok(n) = stdin.read(&mut buf) {
                        if n == 0 {
                            break;
                        }
                        for k in parse_keys(&buf[..n]) {
                            if k == KeyInput::Quit {
                                token.trigger();
                                return;
                            }
                            if tx.send(k).is_err() {
                                return;
                            }
                        }
                    }
                })
                .map_err(|e| RuntimeError::Callback(e.to_string()))?;
            (None, Some(rx))
        }
        TeleopSource::Bridge => (None, None),
    };
    Ok(Running::spawn(node, RATE_HZ, move |_| {
        let now = start.elapsed().as_secs_f64();
        let twist = match &mut script {
            Some(s) => s.at(now),
            None => {
                if let Some(rx) = &key_rx {
                    for k in rx.try_iter() {
                        if let KeyInput::Key(k) = k {
                            keys.key(k, now);
                        }
                    }
                }
                for s in ui.drain() {
                    keys.set(twist_from_msg(&s.value), now);
                }
                keys.output(now)
            }
        };
        out.publish(&twist_to_msg(twist))?;
        Ok(Flow::Continue)
    }))
}
