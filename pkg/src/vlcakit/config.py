import os

from dotenv import load_dotenv

load_dotenv()


class ToolkitConfig:
    OUTPUT_ROOT = os.environ.get(
        'VLCA_OUT',
        os.path.join(os.path.dirname(os.path.dirname(os.path.dirname(__file__))), 'out'))
    TEMPLATES_DIR = os.path.join(os.path.dirname(__file__), 'templates')
    MANIFEST_NAME = 'manifest.json'

    CONTROL_RATE_HZ = 1000.0
    PLANT_SUBSTEPS = 10
    CURRENT_LIMIT_A = 31.0

    MARGIN_BAND_RAD_S = (1e-2, 1e5)
    MARGIN_POINTS_PER_DECADE = 200
    MARGIN_REL_TOL = 1e-9

    CSV_FLOAT_FORMAT = '.10g'

    LOG_LEVEL = os.environ.get('LOG_LEVEL', 'INFO').upper()
    LOG_FORMAT = os.environ.get('LOG_FORMAT', '%(asctime)s | %(levelname)s | %(name)s | %(message)s')
    SWEEP_LOG_LEVEL = os.environ.get('VLCA_SWEEP_LOG_LEVEL', 'WARNING').upper()

    @classmethod
    def control_period(cls) -> float:
        return 1.0 / cls.CONTROL_RATE_HZ

    @classmethod
    def plant_step(cls) -> float:
        return cls.control_period() / cls.PLANT_SUBSTEPS
