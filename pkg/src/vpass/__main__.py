import sys

from vpass.cli import main

sys.exit(main())
