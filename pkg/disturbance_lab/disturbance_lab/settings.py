"""
Django settings for the disturbance_lab project.

The project has no web surface; Django provides settings, the management
command CLI, the run log and the test runner.
"""

from pathlib import Path
import os
from dotenv import load_dotenv

# Build paths inside the project
BASE_DIR = Path(__file__).resolve().parent.parent

# Load environment variables from .env
# Prefer project root (same dir as manage.py), but also load from settings dir if present
load_dotenv(BASE_DIR / '.env')
load_dotenv((BASE_DIR / 'disturbance_lab' / '.env'))

SECRET_KEY = os.getenv('DJANGO_SECRET_KEY', 'dev-insecure-key')
DEBUG = os.getenv('DJANGO_DEBUG', 'true').lower() == 'true'
ALLOWED_HOSTS = []

# Application definition
INSTALLED_APPS = [
    'linalg_core',
    'dynamics',
    'reservoir',
    'closed_loop',
    'metrics',
    'experiments',
]

# Database (run log only)
DATABASES = {
    'default': {
        'ENGINE': os.getenv('DB_ENGINE', 'django.db.backends.sqlite3'),
        'NAME': os.getenv('DB_NAME', str(BASE_DIR / 'db.sqlite3')),
        'USER': os.getenv('DB_USER', ''),
        'PASSWORD': os.getenv('DB_PASSWORD', ''),
        'HOST': os.getenv('DB_HOST', ''),
        'PORT': os.getenv('DB_PORT', ''),
    }
}

# Internationalization
LANGUAGE_CODE = 'en-us'
TIME_ZONE = os.getenv('TIME_ZONE', 'UTC')
USE_I18N = False
USE_TZ = True

# Experiment defaults
DISTURBANCE_LAB = {
    'OUTPUT_DIR': Path(os.getenv('DISTURBANCE_LAB_OUTPUT_DIR', str(BASE_DIR / 'runs'))),
    'SWEEP_WORKERS': int(os.getenv('DISTURBANCE_LAB_SWEEP_WORKERS', '1')),
}

# Logging
LOG_LEVEL = os.getenv('DISTURBANCE_LAB_LOG_LEVEL', 'INFO').upper()

LOGGING = {
    'version': 1,
    'disable_existing_loggers': False,
    'formatters': {
        'simple': {
            'format': '{asctime} {levelname} {name}: {message}',
            'style': '{',
        },
    },
    'handlers': {
        'console': {
            'class': 'logging.StreamHandler',
            'formatter': 'simple',
        },
    },
    'loggers': {
        name: {'handlers': ['console'], 'level': LOG_LEVEL, 'propagate': False}
        for name in INSTALLED_APPS + ['disturbance_lab']
    },
}

# Default primary key field type
DEFAULT_AUTO_FIELD = 'django.db.models.BigAutoField'
