use std::io::{BufReader, BufWriter, Read, Write};
use std::net::TcpStream;
use std::process::{Child, Command, Stdio};
use std::sync::mpsc::{self, Receiver, RecvTimeoutError, Sender};
use std::thread;
use std::time::Duration;

use super::protocol::{
    self, GradientReply, GradientRequest, ProtocolError, STATUS_BAD_DIMENSIONS, STATUS_BAD_LABEL, STATUS_FAILED,
    STATUS_OK,
};
use super::{Classifier, ClassifierError, Evaluation};
use crate::adversary::cost;
use crate::image::Image;

impl From<ProtocolError> for ClassifierError {
    fn from(e: ProtocolError) -> Self {
        match e {
            ProtocolError::Io(e) if e.kind() == std::io::ErrorKind::UnexpectedEof => ClassifierError::Closed,
            ProtocolError::Io(e) => ClassifierError::Io(e),
            e => ClassifierError::Malformed(e.to_string()),
        }
    }
}

type ReplyResult = Result<GradientReply, ProtocolError>;

/// Client for a gradient provider reached over a byte stream.
///
/// Replies are read on a helper thread so a stalled provider surfaces as a
/// timeout instead of blocking the attack forever. After a timeout or a
/// malformed reply the connection is out of sync and every later call fails.
pub struct ExternalClassifier {
    classes: usize,
    timeout: Duration,
    writer: Box<dyn Write + Send>,
    expect: Sender<(usize, usize)>,
    replies: Receiver<ReplyResult>,
    broken: bool,
    child: Option<Child>,
}

impl ExternalClassifier {
    pub fn from_streams(
        reader: impl Read + Send + 'static,
        writer: impl Write + Send + 'static,
        classes: usize,
        timeout: Duration,
    ) -> Self {
        let (expect_tx, expect_rx) = mpsc::channel::<(usize, usize)>();
        let (reply_tx, reply_rx) = mpsc::channel();
        thread::spawn(move || {
            let mut reader = BufReader::new(reader);
            for (k, values) in expect_rx {
                let r = protocol::read_reply(&mut reader, k, values);
                let failed = r.is_err();
                if reply_tx.send(r).is_err() || failed {
                    break;
                }
            }
        });
        Self {
            classes,
            timeout,
            writer: Box::new(BufWriter::new(writer)),
            expect: expect_tx,
            replies: reply_rx,
            broken: false,
            child: None,
        }
    }

    /// Launch a provider process and talk to it over its standard I/O.
    pub fn spawn(command: &mut Command, classes: usize, timeout: Duration) -> Result<Self, ClassifierError> {
        let mut child = command.stdin(Stdio::piped()).stdout(Stdio::piped()).spawn()?;
        let stdin = child.stdin.take().ok_or(ClassifierError::Closed)?;
        let stdout = child.stdout.take().ok_or(ClassifierError::Closed)?;
        let mut c = Self::from_streams(stdout, stdin, classes, timeout);
        c.child = Some(child);
        Ok(c)
    }

    /// Connect to a provider listening on a local socket.
    pub fn connect(addr: &str, classes: usize, timeout: Duration) -> Result<Self, ClassifierError> {
        let stream = TcpStream::connect(addr)?;
        stream.set_nodelay(true)?;
        let reader = stream.try_clone()?;
        Ok(Self::from_streams(reader, stream, classes, timeout))
    }

    /// Send one request and wait for its reply.
    pub fn request(&mut self, req: &GradientRequest) -> Result<GradientReply, ClassifierError> {
        if self.broken {
            return Err(ClassifierError::Closed);
        }
        let values = req.pixels.len();
        let frame = protocol::encode_request(req);
        let sent = protocol::write_frame(&mut self.writer, &frame);
        if let Err(e) = sent {
            self.broken = true;
            return Err(e.into());
        }
        if self.expect.send((req.classes as usize, values)).is_err() {
            self.broken = true;
            return Err(ClassifierError::Closed);
        }
        match self.replies.recv_timeout(self.timeout) {
            Ok(Ok(r)) => Ok(r),
            Ok(Err(e)) => {
                self.broken = true;
                Err(e.into())
            }
            Err(RecvTimeoutError::Timeout) => {
                self.broken = true;
                Err(ClassifierError::Timeout(self.timeout))
            }
            Err(RecvTimeoutError::Disconnected) => {
                self.broken = true;
                Err(ClassifierError::Closed)
            }
        }
    }
}

impl Drop for ExternalClassifier {
    fn drop(&mut self) {
        if let Some(mut child) = self.child.take() {
            // closing stdin lets a well-behaved provider exit on EOF
            self.writer = Box::new(std::io::sink());
            let _ = child.kill();
            let _ = child.wait();
        }
    }
}

impl Classifier for ExternalClassifier {
    fn num_classes(&self) -> usize {
        self.classes
    }

    fn evaluate(&mut self, image: &Image, decrease: usize, increase: Option<usize>) -> Result<Evaluation, ClassifierError> {
        let label = |l: usize| u32::try_from(l).map_err(|_| ClassifierError::Label(l, self.classes));
        let req = GradientRequest {
            width: image.width() as u32,
            height: image.height() as u32,
            classes: self.classes as u32,
            decrease: label(decrease)?,
            increase: increase.map(label).transpose()?,
            pixels: image.to_f32(),
        };
        let reply = self.request(&req)?;
        if reply.status != STATUS_OK {
            return Err(ClassifierError::Provider(reply.status));
        }
        let probabilities: Vec<f64> = reply.probabilities.iter().map(|&p| p as f64).collect();
        let gradient = Image::from_f32(image.width(), image.height(), &reply.gradient)
            .map_err(|e| ClassifierError::Malformed(e.to_string()))?;
        let cost = cost(&probabilities, decrease, increase)?;
        Ok(Evaluation { probabilities, cost, gradient })
    }
}

fn status_of(e: &ClassifierError) -> u8 {
    match e {
        ClassifierError::Dimensions { .. } => STATUS_BAD_DIMENSIONS,
        ClassifierError::Label(..) => STATUS_BAD_LABEL,
        _ => STATUS_FAILED,
    }
}

/// Answer requests from `reader` with `classifier` until the stream ends.
/// Returns the first protocol error, after which the stream cannot be resynchronised.
pub fn serve(classifier: &mut dyn Classifier, reader: impl Read, writer: impl Write) -> Result<(), ProtocolError> {
    let mut reader = BufReader::new(reader);
    let mut writer = BufWriter::new(writer);
    while let Some(req) = protocol::read_request(&mut reader)? {
        let values = req.pixels.len();
        let k = req.classes as usize;
        let outcome = if k != classifier.num_classes() {
            Err(STATUS_BAD_LABEL)
        } else {
            Image::from_f32(req.width as usize, req.height as usize, &req.pixels)
                .map_err(|_| STATUS_BAD_DIMENSIONS)
                .and_then(|img| {
                    classifier
                        .evaluate(&img, req.decrease as usize, req.increase.map(|l| l as usize))
                        .map_err(|e| status_of(&e))
                })
        };
        let reply = match outcome {
            Ok(ev) => GradientReply {
                status: STATUS_OK,
                probabilities: ev.probabilities.iter().map(|&p| p as f32).collect(),
                gradient: ev.gradient.to_f32(),
            },
            Err(status) => GradientReply { status, probabilities: vec![0.0; k], gradient: vec![0.0; values] },
        };
        protocol::write_frame(&mut writer, &protocol::encode_reply(&reply))?;
    }
    Ok(())
}
