"""
WSGI config for the gait lab project.
"""

import os
from django.core.wsgi import get_wsgi_application

os.environ.setdefault('DJANGO_SETTINGS_MODULE', 'gaitlab.settings')
application = get_wsgi_application()
