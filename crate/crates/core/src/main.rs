use std::fs;
use std::io::{self, Write};
use std::net::{Ipv4Addr, SocketAddrV4};
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::time::Duration;

use clap::{Parser, Subcommand};
use thiserror::Error;

use etea::analysis;
use etea::codec::{self, CodecError};
use etea::keyfile::{self, KeyFileError};
use etea::stego::{self, StegoError};
use etea::transfer::{self, ClientOptions, Server, ServerConfig, TransferError};
use etea::Key128;

const EXIT_CODES: &str = "\
Exit codes:
  0   success
  1   I/O error (missing file, permission, ...)
  2   usage error
  3   invalid key file
  4   not a valid sealed payload (bad magic, version, truncated, checksum)
  5   decryption failed: wrong key or tampered payload (bad padding, length)
  6   no embedded payload found, or corrupt stego trailer
  7   embedding refused (empty carrier, or already embedded without --force)
  8   could not connect to server
  9   transfer rejected by server, or protocol error
  10  could not bind server address";

#[derive(Parser)]
#[command(name = "etea", version, about = "Encrypt, embed and transfer files", after_help = EXIT_CODES)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Write a new random key file
    Keygen {
        #[arg(long)]
        out: PathBuf,
    },
    /// Encrypt a file into a sealed payload
    Encrypt {
        #[arg(long)]
        key: PathBuf,
        #[arg(long = "in")]
        input: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
    /// Decrypt a sealed payload
    Decrypt {
        #[arg(long)]
        key: PathBuf,
        #[arg(long = "in")]
        input: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
    /// Append a payload file to a carrier file
    Embed {
        #[arg(long)]
        carrier: PathBuf,
        /// Payload to hide
        #[arg(long = "in")]
        input: PathBuf,
        #[arg(long)]
        out: PathBuf,
        /// Embed even if the carrier already holds a payload
        #[arg(long)]
        force: bool,
    },
    /// Recover the embedded payload from a stego file
    Extract {
        #[arg(long = "in")]
        input: PathBuf,
        /// Where to write the payload
        #[arg(long)]
        out: PathBuf,
        /// Also write the recovered carrier here
        #[arg(long)]
        carrier: Option<PathBuf>,
    },
    /// Encrypt a file and embed it in a carrier
    Seal {
        #[arg(long)]
        key: PathBuf,
        #[arg(long = "in")]
        input: PathBuf,
        #[arg(long)]
        carrier: PathBuf,
        #[arg(long)]
        out: PathBuf,
        #[arg(long)]
        force: bool,
    },
    /// Extract and decrypt the file hidden in a stego file
    Open {
        #[arg(long)]
        key: PathBuf,
        #[arg(long = "in")]
        input: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
    /// Send a file to a server
    Send {
        #[arg(long)]
        host: Ipv4Addr,
        #[arg(long, default_value_t = transfer::DEFAULT_PORT)]
        port: u16,
        #[arg(long = "in")]
        input: PathBuf,
    },
    /// Receive files into a directory until killed
    Serve {
        #[arg(long, default_value = "0.0.0.0")]
        host: Ipv4Addr,
        #[arg(long, default_value_t = transfer::DEFAULT_PORT)]
        port: u16,
        #[arg(long)]
        out_dir: PathBuf,
        /// Per-connection read timeout in seconds
        #[arg(long, default_value_t = 30)]
        timeout: u64,
    },
    /// Run the avalanche and equivalent-key experiments
    Analyze {
        #[arg(long, default_value_t = 10_000)]
        trials: u64,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// Number of random keys for the equivalent-key check
        #[arg(long, default_value_t = 100)]
        keys: u64,
        /// Write the avalanche report as CSV to this file
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

#[derive(Debug, Error)]
enum CliError {
    #[error("{}: {source}", path.display())]
    Io { path: PathBuf, source: io::Error },
    #[error("{}: {source}", path.display())]
    Key { path: PathBuf, source: KeyFileError },
    #[error(transparent)]
    Codec(#[from] CodecError),
    #[error(transparent)]
    Stego(#[from] StegoError),
    #[error(transparent)]
    Transfer(#[from] TransferError),
    #[error("{0}")]
    Usage(String),
}

impl CliError {
    fn exit_code(&self) -> u8 {
        match self {
            CliError::Io { .. } => 1,
            CliError::Usage(_) => 2,
            CliError::Key { .. } => 3,
            CliError::Codec(CodecError::BadPadding | CodecError::LengthMismatch { .. }) => 5,
            CliError::Codec(_) => 4,
            CliError::Stego(StegoError::NoMagic | StegoError::CorruptTrailer { .. }) => 6,
            CliError::Stego(_) => 7,
            CliError::Transfer(TransferError::ConnectFailed { .. }) => 8,
            CliError::Transfer(TransferError::BindFailed { .. }) => 10,
            CliError::Transfer(TransferError::Io(_)) => 1,
            CliError::Transfer(_) => 9,
        }
    }
}

fn read(path: &Path) -> Result<Vec<u8>, CliError> {
    fs::read(path).map_err(|source| CliError::Io {
        path: path.to_owned(),
        source,
    })
}

fn read_key(path: &Path) -> Result<Key128, CliError> {
    let text = fs::read_to_string(path).map_err(|source| CliError::Io {
        path: path.to_owned(),
        source,
    })?;
    keyfile::parse_key(&text).map_err(|source| CliError::Key {
        path: path.to_owned(),
        source,
    })
}

/// Writes through a temp file in the target directory and renames it into
/// place, so a failed command never leaves a partial output behind.
fn write_atomic(path: &Path, data: &[u8]) -> Result<(), CliError> {
    let io_err = |source| CliError::Io {
        path: path.to_owned(),
        source,
    };
    let dir = match path.parent() {
        Some(p) if !p.as_os_str().is_empty() => p,
        _ => Path::new("."),
    };
    let mut tmp = tempfile::Builder::new()
        .prefix(".etea-tmp-")
        .tempfile_in(dir)
        .map_err(io_err)?;
    tmp.write_all(data).map_err(io_err)?;
    tmp.as_file().sync_all().map_err(io_err)?;
    tmp.persist(path).map_err(|e| io_err(e.error))?;
    Ok(())
}

fn seal_into(
    key: &Key128,
    plaintext: &[u8],
    carrier: &[u8],
    force: bool,
) -> Result<Vec<u8>, CliError> {
    let sealed = codec::seal(plaintext, key).to_bytes();
    Ok(stego::embed(carrier, &sealed, force)?)
}

fn run(cli: Cli) -> Result<(), CliError> {
    match cli.command {
        Command::Keygen { out } => {
            let text = keyfile::render_key(&keyfile::generate_key());
            write_atomic(&out, text.as_bytes())?;
            #[cfg(unix)]
            {
                use std::os::unix::fs::PermissionsExt;
                let _ = fs::set_permissions(&out, fs::Permissions::from_mode(0o600));
            }
        }
        Command::Encrypt { key, input, out } => {
            let key = read_key(&key)?;
            let sealed = codec::seal(&read(&input)?, &key);
            write_atomic(&out, &sealed.to_bytes())?;
        }
        Command::Decrypt { key, input, out } => {
            let key = read_key(&key)?;
            let plain = codec::open_bytes(&read(&input)?, &key)?;
            write_atomic(&out, &plain)?;
        }
        Command::Embed {
            carrier,
            input,
            out,
            force,
        } => {
            let stego = stego::embed(&read(&carrier)?, &read(&input)?, force)?;
            write_atomic(&out, &stego)?;
        }
        Command::Extract {
            input,
            out,
            carrier,
        } => {
            let data = read(&input)?;
            let (cover, payload) = stego::extract(&data)?;
            write_atomic(&out, payload)?;
            if let Some(path) = carrier {
                write_atomic(&path, cover)?;
            }
        }
        Command::Seal {
            key,
            input,
            carrier,
            out,
            force,
        } => {
            let key = read_key(&key)?;
            let stego = seal_into(&key, &read(&input)?, &read(&carrier)?, force)?;
            write_atomic(&out, &stego)?;
        }
        Command::Open { key, input, out } => {
            let key = read_key(&key)?;
            let data = read(&input)?;
            let (_, payload) = stego::extract(&data)?;
            let plain = codec::open_bytes(payload, &key)?;
            write_atomic(&out, &plain)?;
        }
        Command::Send { host, port, input } => {
            if !input.is_file() {
                return Err(CliError::Io {
                    path: input,
                    source: io::Error::new(io::ErrorKind::NotFound, "not a readable file"),
                });
            }
            let addr = SocketAddrV4::new(host, port);
            transfer::send_file(addr, &input, &ClientOptions::default())?;
            println!("sent {} to {addr}", input.display());
        }
        Command::Serve {
            host,
            port,
            out_dir,
            timeout,
        } => {
            if timeout == 0 {
                return Err(CliError::Usage(
                    "--timeout must be at least 1 second".into(),
                ));
            }
            let mut config = ServerConfig::new(SocketAddrV4::new(host, port), out_dir);
            config.read_timeout = Duration::from_secs(timeout);
            let server = Server::bind(config)?;
            println!("listening on {}", server.local_addr());
            let _ = io::stdout().flush();
            server.run();
        }
        Command::Analyze {
            trials,
            seed,
            keys,
            out,
        } => {
            if trials == 0 {
                return Err(CliError::Usage("--trials must be at least 1".into()));
            }
            let report = analysis::avalanche(trials, seed);
            print!("seed: {seed}\n{}", report.to_text());
            print!(
                "{}",
                analysis::check_equivalent_keys(keys, 100, seed).to_text()
            );
            if let Some(path) = out {
                write_atomic(&path, report.to_csv().as_bytes())?;
            }
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("etea: error: {e}");
            ExitCode::from(e.exit_code())
        }
    }
}
