use std::fs;
use std::io::{Read, Write};
use std::net::{Ipv4Addr, SocketAddrV4, TcpStream};
use std::path::Path;
use std::thread;
use std::time::{Duration, Instant};

use etea::transfer::{
    self, encode_frame, encode_header, send_bytes, send_frame_bytes, Ack, ClientOptions, Server,
    ServerConfig, ServerHandle, TransferError,
};
use rand::{RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;
use sha2::{Digest, Sha256};

fn start(dir: &Path) -> ServerHandle {
    let mut cfg = ServerConfig::new(SocketAddrV4::new(Ipv4Addr::LOCALHOST, 0), dir);
    cfg.read_timeout = Duration::from_secs(5);
    Server::bind(cfg).unwrap().spawn()
}

fn random_bytes(len: usize, seed: u64) -> Vec<u8> {
    let mut v = vec![0u8; len];
    ChaCha8Rng::seed_from_u64(seed).fill_bytes(&mut v);
    v
}

fn listing(dir: &Path) -> Vec<String> {
    let mut names: Vec<_> = fs::read_dir(dir)
        .unwrap()
        .map(|e| e.unwrap().file_name().into_string().unwrap())
        .collect();
    names.sort();
    names
}

fn wait_until(mut cond: impl FnMut() -> bool) -> bool {
    let deadline = Instant::now() + Duration::from_secs(5);
    while Instant::now() < deadline {
        if cond() {
            return true;
        }
        thread::sleep(Duration::from_millis(20));
    }
    false
}

#[test]
fn loopback_one_mib_is_bit_exact() {
    let dir = tempfile::tempdir().unwrap();
    let server = start(dir.path());
    let src = tempfile::tempdir().unwrap();
    let path = src.path().join("clip.mp4");
    let body = random_bytes(1 << 20, 1);
    fs::write(&path, &body).unwrap();

    let ack = transfer::send_file(server.addr(), &path, &ClientOptions::default()).unwrap();
    assert_eq!(ack, Ack::Accepted);
    let got = fs::read(dir.path().join("clip.mp4")).unwrap();
    assert_eq!(Sha256::digest(&got), Sha256::digest(&body));
    server.shutdown();
}

#[test]
fn corrupted_crc_is_rejected_and_nothing_stored() {
    let dir = tempfile::tempdir().unwrap();
    let server = start(dir.path());
    let mut frame = encode_frame("bad.bin", b"some body").unwrap();
    *frame.last_mut().unwrap() ^= 0xff;
    let ack = send_frame_bytes(server.addr(), &frame, &ClientOptions::default()).unwrap();
    assert_eq!(ack, Ack::Rejected);
    assert!(listing(dir.path()).is_empty());

    // Same corruption inside the body.
    let mut frame = encode_frame("bad.bin", b"some body").unwrap();
    let n = frame.len();
    frame[n - 6] ^= 1;
    assert_eq!(
        send_frame_bytes(server.addr(), &frame, &ClientOptions::default()).unwrap(),
        Ack::Rejected
    );
    assert!(listing(dir.path()).is_empty());
    server.shutdown();
}

#[test]
fn path_traversal_is_rejected() {
    let dir = tempfile::tempdir().unwrap();
    let server = start(dir.path());
    // Build the frame by hand: the encoder refuses such names.
    let name = b"../etc/x";
    let body = b"payload";
    let mut frame = b"ETEAXFER\x01".to_vec();
    frame.extend_from_slice(&(name.len() as u16).to_be_bytes());
    frame.extend_from_slice(name);
    frame.extend_from_slice(&(body.len() as u64).to_be_bytes());
    frame.extend_from_slice(body);
    let crc = crc32fast::hash(&frame);
    frame.extend_from_slice(&crc.to_be_bytes());

    let ack = send_frame_bytes(server.addr(), &frame, &ClientOptions::default()).unwrap();
    assert_eq!(ack, Ack::Rejected);
    assert!(listing(dir.path()).is_empty());
    assert!(!dir.path().parent().unwrap().join("etc/x").exists());
    assert!(matches!(
        send_bytes(server.addr(), "../etc/x", body, &ClientOptions::default()),
        Err(TransferError::InvalidName(_))
    ));
    server.shutdown();
}

#[test]
fn bad_magic_is_rejected() {
    let dir = tempfile::tempdir().unwrap();
    let server = start(dir.path());
    let ack = send_frame_bytes(
        server.addr(),
        b"GET / HTTP/1.0\r\n\r\n",
        &ClientOptions::default(),
    )
    .unwrap();
    assert_eq!(ack, Ack::Rejected);
    server.shutdown();
}

#[test]
fn abrupt_disconnect_cleans_up_and_server_keeps_serving() {
    let dir = tempfile::tempdir().unwrap();
    let server = start(dir.path());
    {
        let mut s = TcpStream::connect(server.addr()).unwrap();
        s.write_all(&encode_header("partial.bin", 1 << 20).unwrap())
            .unwrap();
        s.write_all(&[0xAB; 10_000]).unwrap();
        // Dropped mid-body.
    }
    assert!(
        wait_until(|| listing(dir.path()).is_empty()),
        "leftovers: {:?}",
        listing(dir.path())
    );
    // Give the handler time to create and remove its temp file.
    thread::sleep(Duration::from_millis(200));
    assert!(listing(dir.path()).is_empty());

    send_bytes(
        server.addr(),
        "after.bin",
        b"still alive",
        &ClientOptions::default(),
    )
    .unwrap();
    assert_eq!(listing(dir.path()), vec!["after.bin"]);
    server.shutdown();
}

#[test]
fn stalled_client_times_out() {
    let dir = tempfile::tempdir().unwrap();
    let mut cfg = ServerConfig::new(SocketAddrV4::new(Ipv4Addr::LOCALHOST, 0), dir.path());
    cfg.read_timeout = Duration::from_millis(300);
    let server = Server::bind(cfg).unwrap().spawn();

    let mut s = TcpStream::connect(server.addr()).unwrap();
    s.write_all(&encode_header("slow.bin", 100).unwrap())
        .unwrap();
    s.set_read_timeout(Some(Duration::from_secs(5))).unwrap();
    let mut ack = [0u8; 1];
    s.read_exact(&mut ack).unwrap();
    assert_eq!(ack[0], transfer::ACK_REJECTED);
    assert!(listing(dir.path()).is_empty());
    server.shutdown();
}

#[test]
fn name_collisions_get_numeric_suffix() {
    let dir = tempfile::tempdir().unwrap();
    let server = start(dir.path());
    let opts = ClientOptions::default();
    for i in 0..3u8 {
        send_bytes(server.addr(), "same.avi", &[i; 10], &opts).unwrap();
    }
    assert_eq!(
        listing(dir.path()),
        vec!["same-1.avi", "same-2.avi", "same.avi"]
    );
    server.shutdown();
}

#[test]
fn concurrent_same_name_transfers_never_clobber() {
    let dir = tempfile::tempdir().unwrap();
    let server = start(dir.path());
    let addr = server.addr();
    let handles: Vec<_> = (0..8u64)
        .map(|i| {
            thread::spawn(move || {
                let body = random_bytes(32 * 1024, i);
                send_bytes(addr, "dup.bin", &body, &ClientOptions::default()).unwrap();
                Sha256::digest(&body).to_vec()
            })
        })
        .collect();
    let mut sent: Vec<_> = handles.into_iter().map(|h| h.join().unwrap()).collect();
    let mut stored: Vec<_> = listing(dir.path())
        .iter()
        .map(|n| Sha256::digest(fs::read(dir.path().join(n)).unwrap()).to_vec())
        .collect();
    sent.sort();
    stored.sort();
    assert_eq!(sent, stored);
    server.shutdown();
}

#[test]
fn connect_failure_is_reported() {
    // Grab a free port and close it again.
    let port = std::net::TcpListener::bind("127.0.0.1:0")
        .unwrap()
        .local_addr()
        .unwrap()
        .port();
    let err = send_bytes(
        SocketAddrV4::new(Ipv4Addr::LOCALHOST, port),
        "x",
        b"y",
        &ClientOptions::default(),
    )
    .unwrap_err();
    assert!(
        matches!(err, TransferError::ConnectFailed { .. }),
        "{err:?}"
    );
}

#[test]
fn bind_failure_is_reported() {
    let dir = tempfile::tempdir().unwrap();
    let server = start(dir.path());
    let err = Server::bind(ServerConfig::new(server.addr(), dir.path()))
        .err()
        .unwrap();
    assert!(matches!(err, TransferError::BindFailed { .. }));
    let err = Server::bind(ServerConfig::new(
        SocketAddrV4::new(Ipv4Addr::LOCALHOST, 0),
        dir.path().join("missing"),
    ))
    .err()
    .unwrap();
    assert!(matches!(err, TransferError::BindFailed { .. }));
    server.shutdown();
}
