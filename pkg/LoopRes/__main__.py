from .main.cli import main

raise SystemExit(main())
