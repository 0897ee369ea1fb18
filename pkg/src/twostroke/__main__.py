import sys

from twostroke.cli import main

sys.exit(main())
