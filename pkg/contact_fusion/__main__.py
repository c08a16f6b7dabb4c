# contact_fusion/__main__.py
import sys

from contact_fusion.cli import main

sys.exit(main())
