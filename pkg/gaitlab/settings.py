"""
Gait Lab - gait-state estimation and exoskeleton torque simulation
Django settings
"""

import os
from pathlib import Path

import dj_database_url
from dotenv import load_dotenv
from decouple import Csv, config

load_dotenv()

BASE_DIR = Path(__file__).resolve().parent.parent

SECRET_KEY = os.environ.get("SECRET_KEY", "change-me-in-production")

DEBUG = config("DEBUG", default=False, cast=bool)

ALLOWED_HOSTS = os.environ.get("ALLOWED_HOSTS", "localhost,127.0.0.1").split(",")

CSRF_TRUSTED_ORIGINS = [
    origin.strip()
    for origin in os.environ.get(
        "CSRF_TRUSTED_ORIGINS", "http://localhost:8000,http://127.0.0.1:8000"
    ).split(",")
    if origin.strip()
]

# Application definition
INSTALLED_APPS = [
    "django.contrib.admin",
    "django.contrib.auth",
    "django.contrib.contenttypes",
    "django.contrib.sessions",
    "django.contrib.messages",
    "django.contrib.staticfiles",
    # Third party
    "rest_framework",
    # Local
    "core",
]

MIDDLEWARE = [
    "django.middleware.security.SecurityMiddleware",
    "django.contrib.sessions.middleware.SessionMiddleware",
    "django.middleware.common.CommonMiddleware",
    "django.middleware.csrf.CsrfViewMiddleware",
    "django.contrib.auth.middleware.AuthenticationMiddleware",
    "django.contrib.messages.middleware.MessageMiddleware",
    "django.middleware.clickjacking.XFrameOptionsMiddleware",
]

ROOT_URLCONF = "gaitlab.urls"

TEMPLATES = [
    {
        "BACKEND": "django.template.backends.django.DjangoTemplates",
        "DIRS": [],
        "APP_DIRS": True,
        "OPTIONS": {
            "context_processors": [
                "django.template.context_processors.debug",
                "django.template.context_processors.request",
                "django.contrib.auth.context_processors.auth",
                "django.contrib.messages.context_processors.messages",
            ],
        },
    },
]

WSGI_APPLICATION = "gaitlab.wsgi.application"

# Database - SQLite unless DATABASE_URL says otherwise
DATABASES = {
    "default": dj_database_url.config(
        default=f"sqlite:///{BASE_DIR / 'db' / 'gaitlab.sqlite3'}"
    )
}

# Password validation
AUTH_PASSWORD_VALIDATORS = [
    {
        "NAME": "django.contrib.auth.password_validation.UserAttributeSimilarityValidator"
    },
    {"NAME": "django.contrib.auth.password_validation.MinimumLengthValidator"},
    {"NAME": "django.contrib.auth.password_validation.CommonPasswordValidator"},
    {"NAME": "django.contrib.auth.password_validation.NumericPasswordValidator"},
]

# Internationalization
LANGUAGE_CODE = "en-gb"
TIME_ZONE = "UTC"
USE_I18N = True
USE_TZ = True

# Static files
STATIC_URL = "static/"
STATIC_ROOT = BASE_DIR / "staticfiles"

# Default primary key field type
DEFAULT_AUTO_FIELD = "django.db.models.BigAutoField"

# Django REST Framework
REST_FRAMEWORK = {
    "DEFAULT_PERMISSION_CLASSES": [
        "rest_framework.permissions.IsAdminUser",
    ],
    "DEFAULT_AUTHENTICATION_CLASSES": [
        "rest_framework.authentication.SessionAuthentication",
    ],
}

# ====================================================================
# GAIT LAB SETTINGS
# ====================================================================

# Gait model
GAIT_PHASE_ORDER = config("GAIT_PHASE_ORDER", default=20, cast=int)
GAIT_CONSTRAINT_TOL = config("GAIT_CONSTRAINT_TOL", default=1e-8, cast=float)

# Process noise standard deviations for (phase rate, stride length, incline)
GAIT_SIGMA_Q = config(
    "GAIT_SIGMA_Q", default="6e-4,9e-4,6e-3", cast=Csv(float, post_process=tuple)
)
GAIT_SIGMA_Q_OUTDOOR = config(
    "GAIT_SIGMA_Q_OUTDOOR", default="1e-3,2e-3,5e-2", cast=Csv(float, post_process=tuple)
)

# Sensor standard deviations for (foot angle, foot velocity, shank angle,
# shank velocity, heel forward, heel up)
GAIT_SIGMA_SENSOR = config(
    "GAIT_SIGMA_SENSOR",
    default="1,10,7,20,0.01,0.08",
    cast=Csv(float, post_process=tuple),
)
GAIT_P0_SCALE = config("GAIT_P0_SCALE", default=1e-3, cast=float)
GAIT_P0_INCLINE = config("GAIT_P0_INCLINE", default=25.0, cast=float)  # deg^2
GAIT_FROZEN_VARIANCE = config("GAIT_FROZEN_VARIANCE", default=1e-12, cast=float)

# Heel-strike backup and detector
GAIT_BACKUP_BETA = config("GAIT_BACKUP_BETA", default=0.5, cast=float)
GAIT_HS_VELOCITY_THRESHOLD = config(
    "GAIT_HS_VELOCITY_THRESHOLD", default=0.0, cast=float
)  # deg/s
GAIT_HS_HEIGHT_THRESHOLD = config(
    "GAIT_HS_HEIGHT_THRESHOLD", default=0.02, cast=float
)  # m
GAIT_HS_REFRACTORY = config("GAIT_HS_REFRACTORY", default=0.3, cast=float)  # s

# Experiment outputs
GAIT_OUTPUT_ROOT = Path(config("GAIT_OUTPUT_ROOT", default=str(BASE_DIR / "runs")))
GAIT_WORKERS = config("GAIT_WORKERS", default=1, cast=int)


# Admin customization
ADMIN_SITE_HEADER = "Gait Lab"
ADMIN_SITE_TITLE = "Gait Lab"
ADMIN_INDEX_TITLE = "Experiment Runs"


# ====================================================================
# SECURITY SETTINGS
# ====================================================================

X_FRAME_OPTIONS = "DENY"

# Only send cookies over HTTPS - set SECURE_COOKIES=False for local development
SESSION_COOKIE_SECURE = config("SECURE_COOKIES", default=True, cast=bool)
CSRF_COOKIE_SECURE = SESSION_COOKIE_SECURE

SESSION_COOKIE_HTTPONLY = True

SECURE_CONTENT_TYPE_NOSNIFF = True
