import numpy as np

RATE = 16000


def sine(freq: float, duration: float = 1.0, amplitude: float = 0.5, rate: int = RATE) -> np.ndarray:
    t = np.arange(int(round(duration * rate))) / rate
    return (amplitude * np.sin(2 * np.pi * freq * t)).astype(np.float32)


def fft_peak_hz(samples: np.ndarray, rate: int = RATE, pad: int = 8) -> float:
    """Частота максимума спектра с zero-padding и параболической интерполяцией."""
    n = len(samples) * pad
    spectrum = np.abs(np.fft.rfft(samples * np.hanning(len(samples)), n=n))
    k = int(np.argmax(spectrum[1:-1])) + 1
    a, b, c = np.log(spectrum[k - 1:k + 2] + 1e-30)
    denom = a - 2 * b + c
    delta = 0.5 * (a - c) / denom if denom != 0 else 0.0
    return (k + delta) * rate / n


def rms(samples: np.ndarray) -> float:
    return float(np.sqrt(np.mean(np.square(samples, dtype=np.float64)))) if len(samples) else 0.0
