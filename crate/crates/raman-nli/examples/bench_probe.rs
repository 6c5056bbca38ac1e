use num_complex::Complex64;
use rustfft::FftPlanner;
use std::time::Instant;

fn main() {
    let mut planner = FftPlanner::new();
    for log2n in [15usize, 18, 20, 21, 22] {
        let n = 1usize << log2n;
        let fft = planner.plan_fft_forward(n);
        let mut buf: Vec<Complex64> = (0..n)
            .map(|i| Complex64::new((i as f64 * 0.001).sin(), (i as f64 * 0.002).cos()))
            .collect();
        fft.process(&mut buf); // warm
        let reps = if log2n <= 18 { 20 } else { 6 };
        let t = Instant::now();
        for _ in 0..reps {
            fft.process(&mut buf);
        }
        let per = t.elapsed().as_secs_f64() / reps as f64;
        println!("2^{log2n}: {:.1} ms/FFT", per * 1e3);
    }
}
