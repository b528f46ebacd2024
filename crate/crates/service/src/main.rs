use belief_service::{bind, init_tracing, serve, shutdown_signal, Settings};

#[tokio::main]
async fn main() {
    init_tracing();
    let settings = match Settings::from_env() {
        Ok(s) => s,
        Err(e) => {
            eprintln!("error: {e}");
            std::process::exit(2);
        }
    };
    let (listener, state) = match bind(&settings).await {
        Ok(x) => x,
        Err(e) => {
            eprintln!("error: {e}");
            std::process::exit(1);
        }
    };
    tracing::info!(addr = %settings.bind, dir = %settings.data_dir.display(), "listening");
    if let Err(e) = serve(listener, state, settings.ui_dir.clone(), shutdown_signal()).await {
        eprintln!("error: {e}");
        std::process::exit(1);
    }
}
