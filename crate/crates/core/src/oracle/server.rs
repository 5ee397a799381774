//! TCP transport for the forward-only embedding service.

use std::io::{BufReader, BufWriter};
use std::net::{SocketAddr, TcpListener, TcpStream, ToSocketAddrs};
use std::sync::atomic::{AtomicBool, Ordering};
use std::net::Shutdown;
use std::sync::{Arc, Mutex};
use std::thread::JoinHandle;
use std::time::Duration;

use crate::error::{Error, Result};
use crate::models::FrozenEncoder;
use crate::numerics::Tensor;

use super::protocol::{self, Frame, ERR_DIM_MISMATCH, ERR_MALFORMED};

/// Serves embeddings of one encoder. Connections are handled one at a
/// time; each connection may carry any number of requests.
pub struct OracleServer {
    listener: TcpListener,
    encoder: Arc<FrozenEncoder<f32>>,
    stop: Arc<AtomicBool>,
    active: Arc<Mutex<Option<TcpStream>>>,
}

impl OracleServer {
    pub fn bind(addr: impl ToSocketAddrs, encoder: Arc<FrozenEncoder<f32>>) -> Result<Self> {
        Ok(Self {
            listener: TcpListener::bind(addr)?,
            encoder,
            stop: Arc::new(AtomicBool::new(false)),
            active: Arc::new(Mutex::new(None)),
        })
    }

    pub fn local_addr(&self) -> Result<SocketAddr> {
        Ok(self.listener.local_addr()?)
    }

    /// Accept connections until shut down.
    pub fn serve(&self) -> Result<()> {
        for conn in self.listener.incoming() {
            if self.stop.load(Ordering::SeqCst) {
                break;
            }
            match conn {
                Ok(stream) => {
                    if let Ok(mut slot) = self.active.lock() {
                        *slot = stream.try_clone().ok();
                    }
                    if let Err(e) = self.handle(stream) {
                        if !self.stop.load(Ordering::SeqCst) {
                            log::warn!("connection closed: {e}");
                        }
                    }
                    if let Ok(mut slot) = self.active.lock() {
                        *slot = None;
                    }
                }
                Err(e) => log::warn!("accept failed: {e}"),
            }
        }
        Ok(())
    }

    /// Serve on a background thread.
    pub fn spawn(self) -> Result<ServerHandle> {
        let addr = self.local_addr()?;
        let stop = Arc::clone(&self.stop);
        let active = Arc::clone(&self.active);
        let thread = std::thread::spawn(move || self.serve());
        Ok(ServerHandle {
            addr,
            stop,
            active,
            thread: Some(thread),
        })
    }

    fn handle(&self, stream: TcpStream) -> Result<()> {
        stream.set_nodelay(true)?;
        let mut reader = BufReader::new(stream.try_clone()?);
        let mut writer = BufWriter::new(stream);
        loop {
            let frame = match protocol::read_frame(&mut reader) {
                Ok(Some(f)) => f,
                Ok(None) => return Ok(()),
                Err(Error::Io(e)) => return Err(Error::Io(e)),
                Err(e) => {
                    let reply = Frame::Error {
                        code: ERR_MALFORMED,
                        message: e.to_string(),
                    };
                    protocol::write_frame(&mut writer, &reply)?;
                    return Ok(());
                }
            };
            let reply = match frame {
                Frame::Embed(batch) => self.embed(&batch),
                _ => Frame::Error {
                    code: ERR_MALFORMED,
                    message: "only embed requests are served".into(),
                },
            };
            protocol::write_frame(&mut writer, &reply)?;
        }
    }

    fn embed(&self, batch: &Tensor<f32>) -> Frame {
        let d = batch.shape()[1];
        if d != self.encoder.input_dim() {
            return Frame::Error {
                code: ERR_DIM_MISMATCH,
                message: format!("expected {} features, got {d}", self.encoder.input_dim()),
            };
        }
        match self.encoder.forward(batch) {
            Ok(z) => Frame::Embedding(z),
            Err(e) => Frame::Error {
                code: ERR_MALFORMED,
                message: e.to_string(),
            },
        }
    }
}

/// Running server; shuts down on [`ServerHandle::shutdown`] or drop.
pub struct ServerHandle {
    addr: SocketAddr,
    stop: Arc<AtomicBool>,
    active: Arc<Mutex<Option<TcpStream>>>,
    thread: Option<JoinHandle<Result<()>>>,
}

impl ServerHandle {
    pub fn addr(&self) -> SocketAddr {
        self.addr
    }

    pub fn shutdown(mut self) -> Result<()> {
        self.stop_and_join()
    }

    fn stop_and_join(&mut self) -> Result<()> {
        let Some(thread) = self.thread.take() else {
            return Ok(());
        };
        self.stop.store(true, Ordering::SeqCst);
        if let Ok(slot) = self.active.lock() {
            if let Some(conn) = slot.as_ref() {
                let _ = conn.shutdown(Shutdown::Both);
            }
        }
        // wake the accept loop
        let _ = TcpStream::connect_timeout(&self.addr, Duration::from_secs(1));
        thread
            .join()
            .map_err(|_| Error::Protocol("server thread panicked".into()))?
    }
}

impl Drop for ServerHandle {
    fn drop(&mut self) {
        let _ = self.stop_and_join();
    }
}

/// Client side of one connection.
pub struct RemoteClient {
    reader: BufReader<TcpStream>,
    writer: BufWriter<TcpStream>,
}

impl RemoteClient {
    pub fn connect(addr: impl ToSocketAddrs) -> Result<Self> {
        let stream = TcpStream::connect(addr).map_err(Error::Transport)?;
        stream.set_nodelay(true).map_err(Error::Transport)?;
        Ok(Self {
            reader: BufReader::new(stream.try_clone().map_err(Error::Transport)?),
            writer: BufWriter::new(stream),
        })
    }

    pub fn embed(&mut self, batch: &Tensor<f32>) -> Result<Tensor<f32>> {
        protocol::write_frame(&mut self.writer, &Frame::Embed(batch.clone())).map_err(transport)?;
        match protocol::read_frame(&mut self.reader).map_err(transport)? {
            Some(Frame::Embedding(z)) => {
                if z.shape()[0] != batch.shape()[0] {
                    return Err(Error::Protocol(format!(
                        "asked for {} embeddings, got {}",
                        batch.shape()[0],
                        z.shape()[0]
                    )));
                }
                Ok(z)
            }
            Some(Frame::Error { code, message }) => Err(Error::Remote { code, message }),
            Some(Frame::Embed(_)) => Err(Error::Protocol("server sent a request frame".into())),
            None => Err(Error::Protocol("server closed the connection".into())),
        }
    }
}

fn transport(e: Error) -> Error {
    match e {
        Error::Io(io) => Error::Transport(io),
        other => other,
    }
}
