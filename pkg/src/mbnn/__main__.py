import sys

from mbnn.cli import main

sys.exit(main())
