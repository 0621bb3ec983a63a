import os
from dotenv import load_dotenv

load_dotenv()

class Settings:
    VERSION = "1.0.0"
    LOG_LEVEL = os.getenv("ATOMICITY_LOG_LEVEL", "INFO")
    OUTPUT_DIR = os.getenv("ATOMICITY_OUTPUT_DIR", "runs")

    # Field arithmetic
    WORD_BITS = int(os.getenv("ATOMICITY_WORD_BITS", "32"))  # 32 or 64, R stays 2^256

    # Timing model (clock cycles)
    BLOCK_CYCLES = 72736          # derived from the 742 ms / 1855 ms totals
    CLOCK_MHZ = float(os.getenv("ATOMICITY_CLOCK_MHZ", "100"))
    SAMPLES_PER_CYCLE = 10

    # Analysis settings
    MEASURED_SNR = 1.36
    ANCHOR_START = 500
    ANCHOR_LENGTH = 4000
    MAX_SHIFT = 100
    SYNC_FLOOR = 0.05
    CI_LEVELS = (1.0, 2.0, 3.0)
    REFERENCE_SCALAR = "1001101101011111101111"  # 20-bit scalar extended by "11"
    GAP_SIGMAS = 3.0
    GAP_THRESHOLD_FLOOR = 1e-6

    # API settings
    API_HOST = os.getenv("ATOMICITY_API_HOST", "0.0.0.0")
    API_PORT = int(os.getenv("PORT", 8000))

settings = Settings()
