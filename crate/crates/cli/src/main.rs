mod backend;
mod output;

use std::io::Write;
use std::net::SocketAddr;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use backend::{Backend, CliError, Result};
use clap::{Parser, Subcommand};
use hypodb::api::{NewPhenomenon, StudyRequest};
use hypodb::catalog::StructureFormat;
use hypodb::inference::{parse_filter, rank, Filter, Sigma, StudyQuery};
use hypodb::workspace::{HypothesisSpec, OpenMode, Workspace};
use output::{Format, Output};

/// Encode competing hypotheses as probabilistic data and rank them against
/// observations.
#[derive(Parser, Debug)]
#[command(name = "hypodb", version)]
struct Cli {
    /// Workspace directory.
    #[arg(
        short,
        long,
        global = true,
        env = "HYPODB_WORKSPACE",
        default_value = "."
    )]
    workspace: PathBuf,

    /// Talk to a running server instead of opening the workspace directly.
    #[arg(long, global = true, env = "HYPODB_SERVER")]
    server: Option<String>,

    #[arg(long, global = true, value_enum, default_value_t = Format::Table)]
    format: Format,

    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Create an empty workspace.
    Init {
        dir: PathBuf,
    },
    AddPhenomenon {
        #[arg(long, default_value = "")]
        description: String,
        #[arg(long)]
        phi: Option<u64>,
    },
    ListPhenomena,
    /// Register a hypothesis from a structure file.
    AddHypothesis {
        #[arg(long)]
        structure: PathBuf,
        /// The structure file is MathML.
        #[arg(long)]
        mathml: bool,
        /// File of `dim`/`param` lines.
        #[arg(long)]
        declarations: Option<PathBuf>,
        #[arg(long = "dim")]
        dims: Vec<String>,
        #[arg(long = "param")]
        params: Vec<String>,
        #[arg(long)]
        name: Option<String>,
        #[arg(long)]
        upsilon: Option<u64>,
        #[arg(long, default_value = "")]
        description: String,
    },
    ListHypotheses,
    /// Print the derived and closed functional dependencies.
    ShowFds {
        upsilon: u64,
    },
    LoadTrial {
        #[arg(long)]
        phi: u64,
        #[arg(long)]
        upsilon: u64,
        csv: PathBuf,
    },
    ListTrials,
    LoadObservations {
        #[arg(long)]
        phi: u64,
        /// Comma-separated dimension columns.
        #[arg(long, value_delimiter = ',', required = true)]
        dims: Vec<String>,
        #[arg(long)]
        source: Option<String>,
        csv: PathBuf,
    },
    ListObservations,
    ShowObservations {
        #[arg(long)]
        obs: u64,
        /// `col:min:max,…`
        #[arg(long)]
        filter: Option<String>,
    },
    Synthesize {
        #[arg(long)]
        phi: u64,
    },
    /// Condition the hypotheses of a phenomenon on an observation set.
    Condition {
        #[arg(long)]
        phi: u64,
        #[arg(long)]
        obs: u64,
        /// A positive number or `auto`.
        #[arg(long, default_value = "auto")]
        sigma: Sigma,
        #[arg(long)]
        top: Option<usize>,
        /// Observed column to compare; defaults to the only one.
        #[arg(long)]
        target: Option<String>,
        /// `col:min:max,…`
        #[arg(long, value_parser = filter_arg)]
        filter: Option<Filter>,
        /// Dimension matching tolerance.
        #[arg(long, default_value_t = 0.0)]
        epsilon: f64,
        #[arg(long)]
        no_auto_synth: bool,
        /// Leave the stored prior unchanged.
        #[arg(long)]
        keep_prior: bool,
    },
    /// Ranked rows of a stored study.
    Rank {
        #[arg(long)]
        study: u64,
        #[arg(long)]
        top: Option<usize>,
    },
    ListStudies,
    /// Print a synthesized relation, or `world`.
    ShowTable {
        #[arg(long)]
        phi: u64,
        name: String,
    },
    /// Serve the workspace over HTTP.
    Serve {
        #[arg(long, default_value = "127.0.0.1:8080")]
        addr: SocketAddr,
        /// Directory of dashboard assets served at `/`.
        #[arg(long)]
        static_dir: Option<PathBuf>,
        #[arg(long)]
        read_only: bool,
    },
}

fn filter_arg(s: &str) -> std::result::Result<Filter, String> {
    parse_filter(s).map_err(|e| e.to_string())
}

fn read_file(path: &Path) -> Result<Vec<u8>> {
    std::fs::read(path).map_err(|e| CliError::File(path.to_path_buf(), e))
}

fn read_text(path: &Path) -> Result<String> {
    std::fs::read_to_string(path).map_err(|e| CliError::File(path.to_path_buf(), e))
}

fn run(cli: Cli) -> Result<Output> {
    let backend = match (&cli.server, &cli.command) {
        (_, Command::Init { dir }) => {
            if cli.server.is_some() {
                return Err(CliError::Unsupported(
                    "init works on a local directory only",
                ));
            }
            Workspace::init(dir)?;
            return Ok(Output::Message(format!("initialized {}", dir.display())));
        }
        (Some(_), Command::Serve { .. }) => {
            return Err(CliError::Unsupported(
                "serve cannot be combined with --server",
            ))
        }
        (
            None,
            Command::Serve {
                addr,
                static_dir,
                read_only,
            },
        ) => {
            serve(&cli.workspace, *addr, static_dir.clone(), *read_only)?;
            return Ok(Output::Message("server stopped".into()));
        }
        (Some(url), _) => Backend::connect(url)?,
        (None, _) => Backend::Local(cli.workspace.clone()),
    };

    Ok(match cli.command {
        Command::Init { .. } | Command::Serve { .. } => unreachable!(),
        Command::AddPhenomenon { description, phi } => {
            Output::row(&backend.add_phenomenon(&NewPhenomenon { description, phi })?)
        }
        Command::ListPhenomena => Output::rows(&backend.phenomena()?),
        Command::AddHypothesis {
            structure,
            mathml,
            declarations,
            dims,
            params,
            name,
            upsilon,
            description,
        } => {
            let mut decl = match &declarations {
                Some(p) => read_text(p)?,
                None => String::new(),
            };
            for d in &dims {
                decl.push_str(&format!("\ndim {d}"));
            }
            for p in &params {
                decl.push_str(&format!("\nparam {p}"));
            }
            let spec = HypothesisSpec {
                name: name.unwrap_or_default(),
                description,
                upsilon,
                structure: read_text(&structure)?,
                format: if mathml {
                    StructureFormat::Mathml
                } else {
                    StructureFormat::Canonical
                },
                declarations: (!decl.trim().is_empty()).then_some(decl),
            };
            Output::row(&backend.add_hypothesis(&spec)?)
        }
        Command::ListHypotheses => Output::rows(&backend.hypotheses()?),
        Command::ShowFds { upsilon } => Output::Fds(backend.fds(upsilon)?),
        Command::LoadTrial { phi, upsilon, csv } => {
            Output::row(&backend.load_trial(phi, upsilon, read_file(&csv)?)?)
        }
        Command::ListTrials => Output::rows(&backend.trials()?),
        Command::LoadObservations {
            phi,
            dims,
            source,
            csv,
        } => {
            let source = source.unwrap_or_else(|| {
                csv.file_name().map_or_else(
                    || csv.display().to_string(),
                    |n| n.to_string_lossy().into_owned(),
                )
            });
            let loaded = backend.load_observations(phi, &dims, &source, read_file(&csv)?)?;
            for w in &loaded.warnings {
                eprintln!("warning: {w}");
            }
            Output::row(&loaded)
        }
        Command::ListObservations => Output::rows(&backend.observation_sets()?),
        Command::ShowObservations { obs, filter } => {
            Output::table(&backend.observations(obs, filter.as_deref())?)
        }
        Command::Synthesize { phi } => {
            let summary = backend.synthesize(phi)?;
            for w in &summary.warnings {
                eprintln!("warning: {w}");
            }
            Output::row(&summary)
        }
        Command::Condition {
            phi,
            obs,
            sigma,
            top,
            target,
            filter,
            epsilon,
            no_auto_synth,
            keep_prior,
        } => {
            let mut query = StudyQuery::new(phi, obs);
            query.sigma = sigma;
            query.target = target;
            query.filter = filter.unwrap_or_default();
            query.epsilon = epsilon;
            query.update_prior = !keep_prior;
            let study = backend.condition(&StudyRequest {
                query,
                auto_synth: !no_auto_synth,
            })?;
            eprintln!("study {}", study.study_id);
            Output::rows(&rank(&study.result, top))
        }
        Command::Rank { study, top } => Output::rows(&backend.ranking(study, top)?),
        Command::ListStudies => Output::rows(&backend.studies()?),
        Command::ShowTable { phi, name } => Output::table(&backend.relation(phi, &name)?),
    })
}

fn serve(
    root: &Path,
    addr: SocketAddr,
    static_dir: Option<PathBuf>,
    read_only: bool,
) -> Result<()> {
    tracing_subscriber::fmt()
        .with_env_filter(
            tracing_subscriber::EnvFilter::try_from_default_env()
                .unwrap_or_else(|_| "info,tower_http=info".into()),
        )
        .with_writer(std::io::stderr)
        .init();
    let mode = if read_only {
        OpenMode::ReadOnly
    } else {
        OpenMode::ReadWrite
    };
    let ws = Workspace::open(root, mode)?;
    let rt = tokio::runtime::Runtime::new()?;
    rt.block_on(async {
        let listener = hypodb_server::bind(addr).await?;
        eprintln!("listening on http://{}", listener.local_addr()?);
        let app = hypodb_server::router(hypodb_server::AppState::new(ws), static_dir);
        hypodb_server::serve(listener, app, shutdown_signal()).await
    })?;
    Ok(())
}

async fn shutdown_signal() {
    let ctrl_c = async {
        let _ = tokio::signal::ctrl_c().await;
    };
    #[cfg(unix)]
    let term = async {
        match tokio::signal::unix::signal(tokio::signal::unix::SignalKind::terminate()) {
            Ok(mut s) => {
                s.recv().await;
            }
            Err(_) => std::future::pending().await,
        }
    };
    #[cfg(not(unix))]
    let term = std::future::pending::<()>();
    tokio::select! {
        _ = ctrl_c => {},
        _ = term => {},
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(e.exit_code() as u8);
        }
    };
    let format = cli.format;
    match run(cli) {
        Ok(out) => {
            let stdout = std::io::stdout();
            let mut lock = stdout.lock();
            match out.print(format, &mut lock).and_then(|_| lock.flush()) {
                Ok(()) => ExitCode::SUCCESS,
                Err(e) if e.kind() == std::io::ErrorKind::BrokenPipe => ExitCode::SUCCESS,
                Err(e) => {
                    eprintln!("error: {e}");
                    ExitCode::from(1)
                }
            }
        }
        Err(e @ CliError::Unsupported(_)) => {
            eprintln!("error: {e}");
            ExitCode::from(2)
        }
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(1)
        }
    }
}
