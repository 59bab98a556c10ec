import sys

from covertsem._cli import main

sys.exit(main())
