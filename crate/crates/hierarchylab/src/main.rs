//! `hierarchylab` command-line tool; see [`hierarchylab::cli`].

fn main() {
    configure_threads();
    std::process::exit(hierarchylab::cli::main_with_args(std::env::args_os()));
}

/// Caps the worker pool at `HIERARCHYLAB_THREADS` when it is set.
fn configure_threads() {
    #[cfg(feature = "parallel")]
    if let Ok(v) = std::env::var(hierarchylab::rng::THREADS_ENV) {
        match v.trim().parse::<usize>() {
            Ok(n) if n >= 1 => {
                let _ = rayon::ThreadPoolBuilder::new()
                    .num_threads(n)
                    .build_global();
            }
            _ => {
                eprintln!(
                    "error: InvalidConfig: {} must be a positive integer",
                    hierarchylab::rng::THREADS_ENV
                );
                std::process::exit(2);
            }
        }
    }
}
