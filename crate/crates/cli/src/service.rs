//! The authority's submission database behind a TCP socket.

use std::io::{self, BufReader, BufWriter};
use std::net::{TcpListener, TcpStream, ToSocketAddrs};
use std::sync::Arc;
use std::thread;

use ctrace::authority::{Authority, SubmissionDb};
use ctrace::crypto::{GroupElement, SemSecCiphertext};

use crate::wire::{b64, read_frame, unb64, write_json, Frame, Request, Response, WireBlob, MAX_FRAME};

/// Applies one request to the database.
pub fn handle(db: &SubmissionDb, req: Request) -> Response {
    match req {
        Request::Store { pk, blob, now } => {
            let pk = match unb64("pk", &pk) {
                Ok(b) => b,
                Err(e) => return Response::error(e),
            };
            let blob = match unb64("blob", &blob).and_then(|b| {
                SemSecCiphertext::from_bytes(&b).map_err(|e| format!("blob: {e}"))
            }) {
                Ok(b) => b,
                Err(e) => return Response::error(e),
            };
            match db.store(&pk, blob, now) {
                Ok(()) => Response::stored(),
                Err(e) => Response::error(format!("pk: {e}")),
            }
        }
        Request::Lookup { keys } => {
            let mut parsed = Vec::with_capacity(keys.len());
            for (i, k) in keys.iter().enumerate() {
                let field = format!("keys[{i}]");
                let bytes = match unb64(&field, k) {
                    Ok(b) => b,
                    Err(e) => return Response::error(e),
                };
                match GroupElement::from_bytes(&bytes) {
                    Ok(pk) => parsed.push(pk),
                    Err(e) => return Response::error(format!("{field}: {e}")),
                }
            }
            let blobs = db
                .lookup(&parsed)
                .into_iter()
                .map(|(pk, blob)| WireBlob { pk: b64(pk.as_bytes()), blob: b64(&blob.to_bytes()) })
                .collect();
            Response::blobs(blobs)
        }
        Request::Prune { now } => Response::removed(db.prune(now)),
    }
}

/// Parses a frame body and applies it.
pub fn handle_body(db: &SubmissionDb, body: &[u8]) -> Response {
    match serde_json::from_slice::<Request>(body) {
        Ok(req) => handle(db, req),
        Err(e) => Response::error(format!("malformed request: {e}")),
    }
}

/// Serves one client until it disconnects.
pub fn serve_connection(stream: TcpStream, authority: &Authority) -> io::Result<()> {
    let mut reader = BufReader::new(stream.try_clone()?);
    let mut writer = BufWriter::new(stream);
    while let Some(frame) = read_frame(&mut reader)? {
        let resp = match frame {
            Frame::Body(body) => handle_body(authority.db(), &body),
            Frame::Oversized(n) => Response::error(format!("frame of {n} bytes exceeds the {MAX_FRAME}-byte limit")),
        };
        write_json(&mut writer, &resp)?;
    }
    Ok(())
}

/// Accepts clients forever, one thread each.
pub fn serve(listener: TcpListener, authority: Arc<Authority>) -> io::Result<()> {
    for stream in listener.incoming() {
        let stream = stream?;
        let authority = Arc::clone(&authority);
        thread::spawn(move || {
            let peer = stream.peer_addr().ok();
            if let Err(e) = serve_connection(stream, &authority) {
                eprintln!("connection {peer:?}: {e}");
            }
        });
    }
    Ok(())
}

/// Blocking client for the service.
pub struct Client {
    reader: BufReader<TcpStream>,
    writer: BufWriter<TcpStream>,
}

impl Client {
    pub fn connect(addr: impl ToSocketAddrs) -> io::Result<Self> {
        let stream = TcpStream::connect(addr)?;
        stream.set_nodelay(true)?;
        Ok(Client {
            reader: BufReader::new(stream.try_clone()?),
            writer: BufWriter::new(stream),
        })
    }

    pub fn request(&mut self, req: &Request) -> io::Result<Response> {
        write_json(&mut self.writer, req)?;
        self.read_response()
    }

    /// Sends raw bytes as one frame, for exercising malformed input.
    pub fn request_raw(&mut self, body: &[u8]) -> io::Result<Response> {
        crate::wire::write_frame(&mut self.writer, body)?;
        self.read_response()
    }

    pub fn writer(&mut self) -> &mut BufWriter<TcpStream> {
        &mut self.writer
    }

    pub fn read_response(&mut self) -> io::Result<Response> {
        match read_frame(&mut self.reader)? {
            Some(Frame::Body(body)) => serde_json::from_slice(&body).map_err(io::Error::other),
            Some(Frame::Oversized(n)) => Err(io::Error::other(format!("oversized response of {n} bytes"))),
            None => Err(io::ErrorKind::UnexpectedEof.into()),
        }
    }
}
