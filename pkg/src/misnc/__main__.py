import sys

from misnc.cli import main

sys.exit(main())
