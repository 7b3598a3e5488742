from p2ptrack.cli import main

main()
