use std::net::SocketAddr;
use std::sync::Arc;
use std::time::Duration;

use axum::body::Body;
use axum::extract::State;
use axum::http::{header, Method, StatusCode, Uri};
use axum::response::{IntoResponse, Response};
use axum::Router;
use urbis_core::api::{ApiRequest, Service};

const FLUSH_EVERY: Duration = Duration::from_millis(100);

pub fn serve(service: Service, addr: SocketAddr) -> anyhow::Result<()> {
    let rt = tokio::runtime::Builder::new_multi_thread().enable_all().build()?;
    rt.block_on(run(Arc::new(service), addr))
}

async fn run(service: Arc<Service>, addr: SocketAddr) -> anyhow::Result<()> {
    let listener = tokio::net::TcpListener::bind(addr).await?;
    // test harnesses read this line to learn the port
    println!("listening on http://{}", listener.local_addr()?);

    let flusher = tokio::spawn({
        let service = service.clone();
        async move {
            let mut tick = tokio::time::interval(FLUSH_EVERY);
            loop {
                tick.tick().await;
                let s = service.clone();
                if let Ok(Err(e)) = tokio::task::spawn_blocking(move || s.flush()).await {
                    eprintln!("log sync failed: {e}");
                }
            }
        }
    });

    let app = Router::new().fallback(handle).with_state(service.clone());
    axum::serve(listener, app).with_graceful_shutdown(shutdown()).await?;
    flusher.abort();
    service.flush().map_err(anyhow::Error::msg)
}

async fn handle(State(service): State<Arc<Service>>, method: Method, uri: Uri, body: String) -> Response {
    let target = uri.path_and_query().map_or("/", |pq| pq.as_str());
    let req = ApiRequest::new(method.as_str(), target, body);
    match tokio::task::spawn_blocking(move || service.route_request(&req)).await {
        Ok(resp) => {
            let status = StatusCode::from_u16(resp.status).unwrap_or(StatusCode::INTERNAL_SERVER_ERROR);
            (status, [(header::CONTENT_TYPE, "application/json")], Body::from(resp.body)).into_response()
        }
        Err(e) => (StatusCode::INTERNAL_SERVER_ERROR, e.to_string()).into_response(),
    }
}

async fn shutdown() {
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
