import sys
from pathlib import Path

# пакеты лежат плоско в корне репозитория
sys.path.insert(0, str(Path(__file__).resolve().parent))
