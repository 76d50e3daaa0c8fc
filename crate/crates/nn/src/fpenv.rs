//! Flush-to-zero control. Subnormal floats make CPU arithmetic dramatically
//! slower and appear in long training runs as gradients decay.

/// Runs `f` with subnormal inputs and results flushed to zero (x86-64 only;
/// elsewhere `f` simply runs). The previous mode is restored afterwards.
pub fn with_flush_to_zero<R>(f: impl FnOnce() -> R) -> R {
    #[cfg(target_arch = "x86_64")]
    {
        #[allow(deprecated)]
        // SAFETY: MXCSR only changes floating-point rounding and denormal
        // handling for this thread; the saved value is written back.
        unsafe {
            use std::arch::x86_64::{_mm_getcsr, _mm_setcsr};
            const FTZ_DAZ: u32 = 0x8040;
            let saved = _mm_getcsr();
            _mm_setcsr(saved | FTZ_DAZ);
            let out = f();
            _mm_setcsr(saved);
            out
        }
    }
    #[cfg(not(target_arch = "x86_64"))]
    {
        f()
    }
}
