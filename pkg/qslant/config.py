from pathlib import Path
from dotenv import load_dotenv
from pydantic import BaseSettings

# Load .env file from the root directory of the project
ROOT_DIR = Path(__file__).parent.parent
PACKAGE_DIR = Path(__file__).parent
load_dotenv(dotenv_path=ROOT_DIR / ".env")


class Settings(BaseSettings):
    environment: str = "development"  # default to development
    log_level: str = "INFO"  # default log level
    corpus_dir: str = str(PACKAGE_DIR / "corpus")  # built-in examples shipped with the package
    default_seed: int = 42
    default_points: int = 3
    default_tol: float = 1e-9  # pass/fail tolerance for pointwise identities

    # rank decisions: sigma counts as zero when sigma <= rank_rtol * sigma_max,
    # with rank_floor as the absolute threshold when sigma_max < 1
    rank_rtol: float = 1e-10
    rank_floor: float = 1e-12
    riemannian_tol: float = 1e-9  # horizontal singular values within this of 1

    cluster_tol: float = 1e-8  # width of an eigenvalue cluster of -(P_V R P_V)^2
    angle_tol: float = 1e-8  # angle agreement across points and structures
    right_angle_tol: float = 1e-9  # |cos theta| below this is reported as exactly pi/2
    subspace_tol: float = 1e-8  # max principal angle for two subspaces to be equal
    identity_tol: float = 1e-9
    condition_tol: float = 1e-5  # second order conditions evaluated with finite differences

    fd_step_scale: float = 1e-4  # h = fd_step_scale * (1 + |p|_inf)
    oracle_samples: int = 200
    conjugation_samples: int = 50  # random orthogonal conjugations checked per corpus run
    workers: int = 1  # thread pool size for per-point analysis

    class Config:
        env_file = ".env"
        env_file_encoding = "utf-8"
        env_prefix = "QSLANT_"


settings = Settings()
