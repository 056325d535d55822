//! Captions a clip over HTTP against the bundled mock caption server.

use std::time::Duration;

use vidcurate::caption::{request_caption, CaptionRequest, MockCaptionServer, MockConfig};
use vidcurate::frame_io::{synth_frames, SynthKind};

fn main() -> vidcurate::Result<()> {
    let server = MockCaptionServer::start(MockConfig { words: 60, ..MockConfig::default() })?;
    println!("mock caption service at {}", server.endpoint());
    let (_, frames) = synth_frames(&SynthKind::moving_square(64, 64, 30, 16, 8))?;
    let request = CaptionRequest::new("square:0-30", 30);
    let keyframes: Vec<_> = request.frame_refs.iter().map(|&i| frames[i as usize].clone()).collect();
    let caption = request_caption(&request, &keyframes, &server.endpoint(), Duration::from_secs(5))?;
    println!("{} words: {}", caption.word_count, caption.text);
    Ok(())
}
