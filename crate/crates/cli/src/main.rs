mod args;
mod commands;
mod config;

use std::process::ExitCode;

use args::Command;
use motion_attn::Error;

/// Usage problems and unreadable inputs exit with 2; numeric failures with 1.
fn exit_code(e: &Error) -> u8 {
    match e {
        Error::NonFinite(_) | Error::Shape { .. } | Error::InvalidTensor(_) => 1,
        _ => 2,
    }
}

fn threads() -> Result<(), String> {
    let Ok(v) = std::env::var("MOTIONATTN_THREADS") else {
        return Ok(());
    };
    let n: usize = v
        .parse()
        .ok()
        .filter(|&n| n > 0)
        .ok_or_else(|| format!("MOTIONATTN_THREADS must be a positive integer, got {v:?}"))?;
    rayon::ThreadPoolBuilder::new()
        .num_threads(n)
        .build_global()
        .map_err(|e| e.to_string())
}

fn main() -> ExitCode {
    let cli = match config::parse(std::env::args_os().collect()) {
        Ok(c) => c,
        Err(config::ParseError::Clap(e)) => {
            let _ = e.print();
            return ExitCode::from(if e.use_stderr() { 2 } else { 0 });
        }
        Err(config::ParseError::Config(msg)) => {
            eprintln!("error: {msg}");
            return ExitCode::from(2);
        }
    };
    if let Err(msg) = threads() {
        eprintln!("error: {msg}");
        return ExitCode::from(2);
    }
    let result = match &cli.command {
        Command::GenData(a) => commands::gen_data(a),
        Command::Train(a) => commands::train(a),
        Command::TrainFusion(a) => commands::train_fusion_cmd(a),
        Command::Predict(a) => commands::predict(a),
        Command::Eval(a) => commands::eval(a),
        Command::AttnExport(a) => commands::attn_export(a),
        Command::Selfcheck(a) => match commands::selfcheck_cmd(a) {
            Ok(true) => Ok(()),
            Ok(false) => return ExitCode::from(1),
            Err(e) => Err(e),
        },
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(exit_code(&e))
        }
    }
}
