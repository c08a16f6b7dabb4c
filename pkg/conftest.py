import sys
import os

# Add the project root directory to the Python path so pytest finds contact_fusion without an install.
sys.path.insert(0, os.path.dirname(os.path.abspath(__file__)))
