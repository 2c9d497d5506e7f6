use tokio::net::TcpListener;
use tonic::transport::{Error, Server};

use crate::pb::tracking_service_server::TrackingServiceServer;
use crate::Settings;

pub async fn serve(listener: TcpListener, settings: &Settings) -> Result<(), Error> {
    Server::builder()
        .add_service(TrackingServiceServer::new(settings.tracker()))
        .serve_with_incoming(crate::incoming(listener))
        .await
}
